"""Procedural generator of ornament-bearing clips with exact ground truth.

The timbre is a fixed 3-partial harmonic tone; what matters is the f0 contour,
which realizes each class archetype: Kan as a brief adjacent-note touch,
Meend as a monotone glide, Murki as a rapid quantized note alternation, Nyas
as a dead-steady sustain, Andolan as a slow unipolar oscillation, Gamak as a
fast deep one. Plain connecting notes (background) are short and slightly
unsteady in pitch so they remain separable from deliberate Nyas holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DurationRules,
    Event,
    LabelTrack,
    ClipManifestEntry,
    Manifest,
    OrnamentClass,
    save_manifest,
    validate_events,
    write_label_track,
    write_wav_pcm16,
)

# sampling ranges per class: (duration lo, duration hi); all inside the
# annotation duration rules with margin
_DURATION_RANGES = {
    OrnamentClass.KAN: (0.15, 0.33),
    OrnamentClass.MEEND: (0.50, 1.20),
    OrnamentClass.MURKI: (0.45, 0.95),
    OrnamentClass.NYAS: (0.65, 2.00),
    OrnamentClass.ANDOLAN: (1.10, 2.40),
    OrnamentClass.GAMAK: (0.75, 1.80),
}

_SCALES = {
    "bhoopali": (0, 2, 4, 7, 9),
    "bageshree": (0, 2, 3, 5, 7, 9, 10),
    "bhairav": (0, 1, 4, 5, 7, 8, 11),
}

# ornaments sit on a raga's anchor notes; passing connectors roam the scale
_ANCHOR_DEGREES = {
    "bhoopali": (0, 4, 7),
    "bageshree": (0, 3, 7),
    "bhairav": (0, 4, 7),
}

_PARTIAL_AMPS = (1.0, 0.5, 0.25)


@dataclass(frozen=True)
class SingerProfile:
    """Pseudo-singer: tonic and oscillation-speed habits differ so that
    inter-singer splits are non-trivial."""

    name: str
    tonic_hz: float
    rate_scale: float
    ragas: tuple[str, ...]


SINGERS = (
    SingerProfile("singer1", 261.63, 1.0, ("bageshree", "bhoopali")),
    SingerProfile("singer2", 293.66, 1.25, ("bhairav", "bhoopali")),
)


@dataclass(frozen=True)
class OrnamentSpec:
    label: OrnamentClass
    duration: float
    base_hz: float
    target_hz: float | None = None     # glide target / touch note
    rate_hz: float | None = None       # oscillation or note-change rate
    depth_semitones: float | None = None

    def __post_init__(self):
        rules = DurationRules()
        lo, hi = rules.bounds(self.label)
        if lo is not None and self.duration < lo:
            raise ValueError(
                f"{self.label.name} of {self.duration:.3f} s is under the "
                f"{lo:.2f} s minimum"
            )
        if hi is not None and self.duration > hi:
            raise ValueError(
                f"{self.label.name} of {self.duration:.3f} s exceeds the "
                f"{hi:.2f} s maximum"
            )


def sample_spec(
    label: OrnamentClass,
    rng: np.random.Generator,
    base_hz: float,
    rate_scale: float = 1.0,
) -> OrnamentSpec:
    lo, hi = _DURATION_RANGES[label]
    duration = float(rng.uniform(lo, hi))
    target = None
    rate = None
    depth = None
    if label == OrnamentClass.KAN:
        step = float(rng.choice((-2.0, 2.0, 3.0)))
        target = base_hz * 2 ** (step / 12)
    elif label == OrnamentClass.MEEND:
        # wide glides: a shallow one is too close to a single Andolan swing
        step = float(rng.choice((-5.0, -4.0, 4.0, 5.0, 7.0)))
        target = base_hz * 2 ** (step / 12)
    elif label == OrnamentClass.MURKI:
        rate = float(rng.uniform(8.0, 12.0)) * rate_scale
        depth = float(rng.choice((2.0, 3.0)))
    elif label == OrnamentClass.ANDOLAN:
        # several full swings, else a slow cycle can pass for a glide
        lo_rate = max(1.4, 2.6 / duration)
        rate = float(rng.uniform(lo_rate, 2.8)) * rate_scale
        depth = float(rng.uniform(0.8, 1.5))
    elif label == OrnamentClass.GAMAK:
        rate = float(rng.uniform(5.0, 8.0)) * rate_scale
        depth = float(rng.uniform(2.5, 4.0))
    return OrnamentSpec(label, duration, base_hz, target, rate, depth)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _semitone_contour(
    spec: OrnamentSpec, n: int, sample_rate: int, rng: np.random.Generator
) -> np.ndarray:
    """f0 contour in semitones relative to the base note."""
    t = np.arange(n) / sample_rate
    u = t / spec.duration
    label = spec.label
    if label == OrnamentClass.NYAS:
        return np.zeros(n)
    if label == OrnamentClass.KAN:
        # start on the touch note, settle quickly onto the main note
        step = 12 * math.log2(spec.target_hz / spec.base_hz)
        return step * (1.0 - _smoothstep(u / 0.45))
    if label == OrnamentClass.MEEND:
        step = 12 * math.log2(spec.target_hz / spec.base_hz)
        return step * _smoothstep(u)
    if label == OrnamentClass.MURKI:
        # quantized alternation over 2-3 neighbouring notes
        pattern = (0.0, spec.depth_semitones, 0.0, -1.0)
        note_idx = np.floor(t * spec.rate_hz).astype(int) % len(pattern)
        steps = np.asarray(pattern)[note_idx]
        # soften the note changes over ~8 ms
        width = max(1, int(0.008 * sample_rate))
        kernel = np.hanning(2 * width + 1)
        kernel /= kernel.sum()
        return np.convolve(steps, kernel, mode="same")
    if label in (OrnamentClass.ANDOLAN, OrnamentClass.GAMAK):
        # unipolar swing from the held note up to the peripheral one
        phase = float(rng.uniform(0, 0.2)) if label == OrnamentClass.ANDOLAN else 0.0
        return spec.depth_semitones * 0.5 * (
            1.0 - np.cos(2 * np.pi * (spec.rate_hz * t + phase))
        )
    raise ValueError(f"no contour for {label}")


def _render_tone(
    f0_hz: np.ndarray,
    sample_rate: int,
    amplitude: float = 0.35,
    edge_seconds: float = 0.02,
) -> np.ndarray:
    phase = 2 * np.pi * np.cumsum(f0_hz) / sample_rate
    out = np.zeros_like(phase)
    for k, a in enumerate(_PARTIAL_AMPS, start=1):
        out += a * np.sin(k * phase)
    out *= amplitude / sum(_PARTIAL_AMPS)
    edge = min(int(edge_seconds * sample_rate), out.size // 2)
    if edge > 0:
        ramp = 0.5 * (1 - np.cos(np.linspace(0, np.pi, edge)))
        out[:edge] *= ramp
        out[-edge:] *= ramp[::-1]
    return out


def render_ornament(
    spec: OrnamentSpec, sample_rate: int, rng: np.random.Generator
) -> np.ndarray:
    n = int(round(spec.duration * sample_rate))
    contour = _semitone_contour(spec, n, sample_rate, rng)
    f0 = spec.base_hz * 2 ** (contour / 12)
    return _render_tone(f0, sample_rate)


def synth_ornament(
    spec: OrnamentSpec, sample_rate: int = 44100, seed: int = 0
) -> tuple[np.ndarray, Event]:
    rng = np.random.default_rng(seed)
    samples = render_ornament(spec, sample_rate, rng)
    return samples, Event(0.0, spec.duration, spec.label)


def _render_connector(
    base_hz: float, duration: float, sample_rate: int, rng: np.random.Generator
) -> np.ndarray:
    """A plain, slightly unsteady passing note (never labeled)."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f1 = float(rng.uniform(2.5, 4.5))
    f2 = float(rng.uniform(5.0, 7.5))
    wobble = 0.18 * np.sin(2 * np.pi * f1 * t) + 0.10 * np.sin(
        2 * np.pi * f2 * t + rng.uniform(0, 2 * np.pi)
    )
    f0 = base_hz * 2 ** (wobble / 12)
    return _render_tone(f0, sample_rate, amplitude=0.25)


@dataclass(frozen=True)
class SynthClip:
    clip_id: str
    samples: np.ndarray
    track: LabelTrack
    singer: str
    raga: str
    tonic_hz: float
    seed: int


def _quota_deck(
    mix: dict, rng: np.random.Generator, size: int
) -> list[OrnamentClass]:
    classes = list(mix)
    weights = np.array([mix[c] for c in classes], dtype=float)
    weights /= weights.sum()
    counts = np.maximum(1, np.round(weights * size).astype(int))
    deck = [c for c, k in zip(classes, counts) for _ in range(k)]
    rng.shuffle(deck)
    return deck


def synth_clip(
    clip_id: str,
    clip_seconds: float,
    profile: SingerProfile,
    raga: str,
    seed: int,
    mix: dict | None = None,
    sample_rate: int = 44100,
) -> SynthClip:
    rng = np.random.default_rng(seed)
    mix = mix or {c: 1.0 for c in OrnamentClass}
    deck = _quota_deck(mix, rng, max(12, int(clip_seconds)))
    scale = _SCALES[raga]
    anchors = _ANCHOR_DEGREES[raga]

    pieces: list[np.ndarray] = []
    events: list[Event] = []
    t = 0.0
    deck_pos = 0
    carry_hz: float | None = None  # melodic continuity after a glide
    while True:
        if rng.random() < 0.2:
            gap = float(rng.uniform(0.10, 0.25))
            pieces.append(np.zeros(int(round(gap * sample_rate))))
            carry_hz = None
        else:
            gap = float(rng.uniform(0.20, 0.42))
            if carry_hz is not None:
                note = carry_hz
            else:
                degree = int(rng.choice(scale))
                note = profile.tonic_hz * 2 ** (degree / 12)
            pieces.append(_render_connector(note, gap, sample_rate, rng))
        t += gap

        remaining = clip_seconds - t
        label = deck[deck_pos % len(deck)]
        if _DURATION_RANGES[label][1] > remaining - 0.15:
            # substituting a class that still fits would skew the mix
            # toward short ornaments, so end the clip instead
            break
        deck_pos += 1
        degree = int(rng.choice(anchors))
        note = profile.tonic_hz * 2 ** (degree / 12)
        spec = sample_spec(label, rng, note, profile.rate_scale)
        samples = render_ornament(spec, sample_rate, rng)
        carry_hz = spec.target_hz if label == OrnamentClass.MEEND else None
        # keep event times exactly on the rendered sample grid
        onset = sum(p.size for p in pieces) / sample_rate
        pieces.append(samples)
        offset = onset + samples.size / sample_rate
        events.append(Event(onset, offset, spec.label))
        t = offset

    total = int(round(clip_seconds * sample_rate))
    audio = np.concatenate(pieces) if pieces else np.zeros(0)
    if audio.size < total:
        audio = np.concatenate([audio, np.zeros(total - audio.size)])
    audio = audio[:total]
    audio += 1e-4 * rng.standard_normal(audio.size)

    track = LabelTrack(clip_id, tuple(events))
    assert not validate_events(track), "generated events must satisfy the rules"
    return SynthClip(
        clip_id, audio, track, profile.name, raga, profile.tonic_hz, seed
    )


def synth_dataset(
    out_dir: str | Path,
    n_clips: int,
    clip_seconds: float = 20.0,
    seed: int = 0,
    mix: dict | None = None,
    sample_rate: int = 44100,
    split_tag: str = "",
) -> Manifest:
    """Write WAVs, label TSVs, and a manifest under ``out_dir``.

    Clips alternate between the two pseudo-singers; ragas alternate within
    each singer, mirroring the structure the experiment splits expect.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_clips):
        profile = SINGERS[i % len(SINGERS)]
        raga = profile.ragas[(i // len(SINGERS)) % len(profile.ragas)]
        clip_id = f"synth{i:03d}"
        clip = synth_clip(
            clip_id, clip_seconds, profile, raga,
            seed=seed * 100003 + i, mix=mix, sample_rate=sample_rate,
        )
        write_wav_pcm16(out_dir / "audio" / f"{clip_id}.wav", clip.samples,
                        sample_rate)
        (out_dir / "labels" / f"{clip_id}.tsv").write_text(
            write_label_track(clip.track)
        )
        entries.append(ClipManifestEntry(
            clip_id=clip_id,
            wav_path=f"audio/{clip_id}.wav",
            singer=clip.singer,
            raga=clip.raga,
            tonic_hz=clip.tonic_hz,
            split_tag=split_tag,
        ))
    manifest = Manifest(tuple(entries), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
