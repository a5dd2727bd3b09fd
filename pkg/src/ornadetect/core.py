"""Domain types, Audacity-style label track I/O, manifests, annotation rules."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class OrnamentClass(IntEnum):
    """The six vocal ornament classes."""

    KAN = 1
    MEEND = 2
    MURKI = 3
    NYAS = 4
    ANDOLAN = 5
    GAMAK = 6


# Frame-label symbols. These are never valid event classes: BACKGROUND marks
# frames outside any event and is never serialized to label files; DONT_CARE
# marks frames excluded from training (truncated events, pad frames).
BACKGROUND = 0
DONT_CARE = -1

ORNAMENT_CLASSES = tuple(OrnamentClass)
NUM_CLASSES = len(ORNAMENT_CLASSES)

# Short class codes as used in label files and plots.
CLASS_CODES = {
    OrnamentClass.KAN: "K",
    OrnamentClass.MEEND: "Me",
    OrnamentClass.MURKI: "Mu",
    OrnamentClass.NYAS: "H",
    OrnamentClass.ANDOLAN: "An",
    OrnamentClass.GAMAK: "G",
}

_NAME_TO_CLASS = {}
for _c in OrnamentClass:
    _NAME_TO_CLASS[_c.name.lower()] = _c
    _NAME_TO_CLASS[CLASS_CODES[_c].lower()] = _c


class LabelError(ValueError):
    """Malformed or rule-breaking label data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def class_from_string(text: str, line: int | None = None) -> OrnamentClass:
    """Resolve a class code (K/Me/Mu/H/An/G) or full name, case-insensitive."""
    cls = _NAME_TO_CLASS.get(text.strip().lower())
    if cls is None:
        raise LabelError(f"unknown ornament class {text!r}", line)
    return cls


@dataclass(frozen=True, order=True)
class Event:
    """One ornament occurrence: [onset, offset) seconds with a class."""

    onset: float
    offset: float
    label: OrnamentClass

    def __post_init__(self):
        if self.onset < 0:
            raise LabelError(f"onset {self.onset} < 0")
        if self.offset <= self.onset:
            raise LabelError(
                f"offset {self.offset} must be greater than onset {self.onset}"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class LabelTrack:
    """Ordered, non-overlapping events for one clip.

    The constructor sorts by onset and rejects overlaps; events that exactly
    touch (e1.offset == e2.onset) are legal. Use ``unchecked=True`` only when
    building a track for validation reporting (e.g. annotator input that may
    still contain overlaps).
    """

    clip_id: str
    events: tuple[Event, ...]
    unchecked: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: (e.onset, e.offset)))
        object.__setattr__(self, "events", events)
        if not self.unchecked:
            for i in range(1, len(events)):
                if events[i].onset < events[i - 1].offset:
                    raise LabelError(
                        f"events {i - 1} and {i} overlap "
                        f"({events[i - 1].offset:.6f} > {events[i].onset:.6f})"
                    )

    def __len__(self) -> int:
        return len(self.events)

    def with_clip_id(self, clip_id: str) -> "LabelTrack":
        return replace(self, clip_id=clip_id)


def parse_label_track(text: str, clip_id: str = "") -> LabelTrack:
    """Parse an Audacity-style label document: one ``start<TAB>end<TAB>label``
    line per event, times in decimal seconds."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise LabelError(
                f"expected 3 tab-separated fields, got {len(parts)}", lineno
            )
        try:
            onset = float(parts[0])
            offset = float(parts[1])
        except ValueError:
            raise LabelError(f"non-numeric time in {line!r}", lineno) from None
        label = class_from_string(parts[2], lineno)
        if offset <= onset:
            raise LabelError(
                f"offset {offset} not after onset {onset}", lineno
            )
        if onset < 0:
            raise LabelError(f"negative onset {onset}", lineno)
        events.append(Event(onset, offset, label))
    return LabelTrack(clip_id, tuple(events))


def write_label_track(track: LabelTrack) -> str:
    """Serialize to the 3-column TSV grammar; 6 decimals (sub-sample at 44.1 kHz)."""
    return "".join(
        f"{e.onset:.6f}\t{e.offset:.6f}\t{CLASS_CODES[e.label]}\n"
        for e in track.events
    )


@dataclass(frozen=True)
class DurationRules:
    """Per-class duration bounds in seconds; None means unbounded."""

    min_seconds: dict = field(
        default_factory=lambda: {
            OrnamentClass.MEEND: 0.45,
            OrnamentClass.MURKI: 0.4,
            OrnamentClass.NYAS: 0.6,
            OrnamentClass.ANDOLAN: 1.0,
            OrnamentClass.GAMAK: 0.7,
        }
    )
    max_seconds: dict = field(
        default_factory=lambda: {
            OrnamentClass.KAN: 0.35,
            OrnamentClass.MURKI: 1.0,
        }
    )

    def __post_init__(self):
        for cls in OrnamentClass:
            lo = self.min_seconds.get(cls)
            hi = self.max_seconds.get(cls)
            for v in (lo, hi):
                if v is not None and v <= 0:
                    raise ValueError(f"non-positive duration bound for {cls.name}")
            if lo is not None and hi is not None and lo >= hi:
                raise ValueError(f"min >= max for {cls.name}")

    def bounds(self, cls: OrnamentClass) -> tuple[float | None, float | None]:
        return self.min_seconds.get(cls), self.max_seconds.get(cls)


@dataclass(frozen=True)
class Violation:
    kind: str  # TooShort | TooLong | Overlap
    event_index: int
    measured: float
    limit: float | None = None

    def describe(self) -> str:
        if self.kind == "Overlap":
            return (
                f"event {self.event_index} overlaps its neighbour by "
                f"{self.measured:.3f} s"
            )
        word = "below minimum" if self.kind == "TooShort" else "above maximum"
        return (
            f"event {self.event_index} duration {self.measured:.3f} s "
            f"{word} {self.limit:.3f} s"
        )

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "event_index": self.event_index,
            "measured": self.measured,
            "limit": self.limit,
        }


def validate_events(
    track: LabelTrack, rules: DurationRules | None = None
) -> list[Violation]:
    """Check duration rules and overlaps; violations are data, not errors."""
    rules = rules or DurationRules()
    out = []
    for i, e in enumerate(track.events):
        lo, hi = rules.bounds(e.label)
        if lo is not None and e.duration < lo:
            out.append(Violation("TooShort", i, e.duration, lo))
        if hi is not None and e.duration > hi:
            out.append(Violation("TooLong", i, e.duration, hi))
        if i > 0 and e.onset < track.events[i - 1].offset:
            out.append(
                Violation("Overlap", i, track.events[i - 1].offset - e.onset)
            )
    return out


@dataclass(frozen=True)
class ClipManifestEntry:
    clip_id: str
    wav_path: str
    singer: str = ""
    raga: str = ""
    tonic_hz: float | None = None
    tala: str | None = None
    bpm: float | None = None
    split_tag: str = ""

    def to_json(self) -> dict:
        d = {
            "clip_id": self.clip_id,
            "wav_path": self.wav_path,
            "singer": self.singer,
            "raga": self.raga,
            "split_tag": self.split_tag,
        }
        if self.tonic_hz is not None:
            d["tonic_hz"] = self.tonic_hz
        if self.tala is not None:
            d["tala"] = self.tala
        if self.bpm is not None:
            d["bpm"] = self.bpm
        return d


_MANIFEST_KEYS = {
    "clip_id", "wav_path", "singer", "raga", "tonic_hz", "tala", "bpm",
    "split_tag",
}


@dataclass(frozen=True)
class Manifest:
    clips: tuple[ClipManifestEntry, ...]
    root: Path | None = None  # directory wav_path entries are relative to

    def __post_init__(self):
        seen = set()
        for c in self.clips:
            if c.clip_id in seen:
                raise ValueError(f"duplicate clip_id {c.clip_id!r} in manifest")
            seen.add(c.clip_id)

    def __len__(self) -> int:
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    def get(self, clip_id: str) -> ClipManifestEntry:
        for c in self.clips:
            if c.clip_id == clip_id:
                return c
        raise KeyError(clip_id)

    def wav_path(self, clip_id: str) -> Path:
        p = Path(self.get(clip_id).wav_path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or "clips" not in doc:
        raise ValueError(f"{path}: manifest must be an object with a 'clips' list")
    clips = []
    for i, rec in enumerate(doc["clips"]):
        unknown = set(rec) - _MANIFEST_KEYS
        if unknown:
            raise ValueError(f"{path}: clip {i}: unknown keys {sorted(unknown)}")
        if "clip_id" not in rec or "wav_path" not in rec:
            raise ValueError(f"{path}: clip {i}: clip_id and wav_path are required")
        clips.append(ClipManifestEntry(**rec))
    return Manifest(tuple(clips), root=path.parent)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    doc = {"clips": [c.to_json() for c in manifest.clips]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono WAV file as float64 samples in [-1, 1].

    Accepts 16/24/32-bit PCM and 32-bit float. 24-bit files arrive from
    scipy as int32 with the low byte zeroed, so the int32 scale applies.
    """
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return samples, int(rate)


def write_wav_pcm16(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    clipped = np.clip(samples, -1.0, 1.0)
    wavfile.write(str(path), sample_rate, (clipped * 32767.0).astype(np.int16))
