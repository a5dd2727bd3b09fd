"""STFT, chromagram extraction, and an autocorrelation pitch tracker."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters; defaults are 4096-point FFT, 35 ms Hann window,
    17.5 ms hop at 44.1 kHz (1544 / 772 samples)."""

    sample_rate: int = 44100
    fft_size: int = 4096
    window_length: int = 1544
    hop: int = 772

    def __post_init__(self):
        if self.window_length > self.fft_size:
            raise ValueError("window_length must not exceed fft_size")
        if self.hop < 1:
            raise ValueError("hop must be >= 1")

    @classmethod
    def for_sample_rate(
        cls, sample_rate: int, window_ms: float = 35.0, hop_ms: float = 17.5,
        fft_size: int = 4096,
    ) -> "StftConfig":
        return cls(
            sample_rate=sample_rate,
            fft_size=fft_size,
            window_length=round(window_ms * 1e-3 * sample_rate),
            hop=round(hop_ms * 1e-3 * sample_rate),
        )

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate


@dataclass(frozen=True)
class ChromaConfig:
    """Octave-folded energy grid: ``bins`` per octave (must be divisible by 12,
    bin 0 = pitch class C at A4 = 440 Hz tuning), folded over [min_freq, max_freq],
    each frame max-normalized."""

    bins: int = 120
    tuning_a4_hz: float = 440.0
    min_freq: float = 65.0
    max_freq: float = 5000.0

    def __post_init__(self):
        if self.bins % 12 != 0:
            raise ValueError("chroma bins must be divisible by 12")
        if not 0 < self.min_freq < self.max_freq:
            raise ValueError("need 0 < min_freq < max_freq")


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-clip (or per-chunk) feature matrix, bins x frames."""

    values: np.ndarray
    frame_hop_seconds: float
    clip_id: str = ""

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PitchTrack:
    """Per-frame f0 in Hz; 0 marks unvoiced frames."""

    f0_hz: np.ndarray
    frame_hop_seconds: float


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    if n_samples < cfg.window_length:
        return 1
    return (n_samples - cfg.window_length) // cfg.hop + 1


def _frame_signal(signal: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Slice into (T, window_length) frames; short signals give one
    zero-padded frame."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError("signal must be 1-D")
    if signal.size == 0:
        raise ValueError("signal is empty")
    if signal.size < cfg.window_length:
        frame = np.zeros(cfg.window_length)
        frame[: signal.size] = signal
        return frame[None, :]
    n = frame_count(signal.size, cfg)
    view = np.lib.stride_tricks.sliding_window_view(signal, cfg.window_length)
    return view[:: cfg.hop][:n]


def stft(signal: np.ndarray, cfg: StftConfig | None = None) -> np.ndarray:
    """Complex spectrogram, (fft_size//2 + 1) x T; Hann-windowed frames
    zero-padded to fft_size."""
    cfg = cfg or StftConfig()
    frames = _frame_signal(signal, cfg)
    window = np.hanning(cfg.window_length)
    spec = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    return spec.T


def chroma_bin_map(cfg: StftConfig, chroma: ChromaConfig) -> np.ndarray:
    """For each FFT bin, its chroma bin index, or -1 if outside the fold range."""
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    out = np.full(n_bins, -1, dtype=np.int64)
    in_range = (freqs >= chroma.min_freq) & (freqs <= chroma.max_freq)
    f = freqs[in_range]
    # semitones above C on a chromatic scale with A4 = 69
    semitone = (69.0 + 12.0 * np.log2(f / chroma.tuning_a4_hz)) % 12.0
    position = semitone * (chroma.bins / 12.0)
    out[in_range] = np.round(position).astype(np.int64) % chroma.bins
    return out


def chromagram(
    signal: np.ndarray,
    stft_cfg: StftConfig | None = None,
    chroma_cfg: ChromaConfig | None = None,
    clip_id: str = "",
) -> FeatureMatrix:
    """Fold STFT energy onto a pitch-class grid; per-frame max-normalized."""
    stft_cfg = stft_cfg or StftConfig()
    chroma_cfg = chroma_cfg or ChromaConfig()
    spec = stft(signal, stft_cfg)
    energy = np.abs(spec) ** 2
    mapping = chroma_bin_map(stft_cfg, chroma_cfg)
    keep = mapping >= 0
    chroma = np.zeros((chroma_cfg.bins, energy.shape[1]))
    np.add.at(chroma, mapping[keep], energy[keep])
    peaks = chroma.max(axis=0)
    nonzero = peaks > 0
    chroma[:, nonzero] /= peaks[nonzero]
    return FeatureMatrix(chroma, stft_cfg.hop_seconds, clip_id)


def pitch_track(
    signal: np.ndarray,
    cfg: StftConfig | None = None,
    fmin: float = 50.0,
    fmax: float = 1500.0,
    voicing_threshold: float = 0.5,
    silence_rms: float = 1e-4,
) -> PitchTrack:
    """Frame-wise autocorrelation f0 estimate on the same grid as the STFT.

    Display aid for annotation UIs, not a model input: clean tones land
    within a semitone, breathy real voices are out of scope.
    """
    cfg = cfg or StftConfig()
    frames = _frame_signal(signal, cfg)
    n = cfg.window_length
    lag_min = max(2, int(cfg.sample_rate / fmax))
    lag_max = min(n - 1, int(np.ceil(cfg.sample_rate / fmin)))

    # autocorrelation by Wiener-Khinchin on zero-padded frames
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, : lag_max + 1]

    f0 = np.zeros(frames.shape[0])
    rms = np.sqrt(np.mean(frames**2, axis=1))
    for i in range(frames.shape[0]):
        if rms[i] < silence_rms or acf[i, 0] <= 0:
            continue
        window = acf[i, lag_min : lag_max + 1]
        peak = window.max()
        if peak / acf[i, 0] < voicing_threshold:
            continue
        # earliest lag close to the global peak avoids subharmonic (octave-down)
        # picks when the signal is near-perfectly periodic
        candidates = np.flatnonzero(window >= 0.9 * peak)
        lag = lag_min + int(candidates[0])
        if 0 < lag < lag_max:
            a, b, c = acf[i, lag - 1], acf[i, lag], acf[i, lag + 1]
            denom = a - 2 * b + c
            if abs(denom) > 1e-12:
                lag = lag + 0.5 * (a - c) / denom
        hz = cfg.sample_rate / lag
        if fmin <= hz <= fmax:
            f0[i] = hz
    return PitchTrack(f0, cfg.hop_seconds)


_CACHE_MAGIC = b"ORNF"
_CACHE_VERSION = 1


def save_features(path: str | Path, fm: FeatureMatrix) -> None:
    """Binary feature cache: magic, version, F, T, hop seconds, then
    row-major little-endian float32 values."""
    header = struct.pack(
        "<4sIIId", _CACHE_MAGIC, _CACHE_VERSION, fm.bins, fm.frames,
        fm.frame_hop_seconds,
    )
    data = np.ascontiguousarray(fm.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + data)


def load_features(path: str | Path, clip_id: str = "") -> FeatureMatrix:
    path = Path(path)
    blob = path.read_bytes()
    magic, version, f, t, hop = struct.unpack_from("<4sIIId", blob, 0)
    if magic != _CACHE_MAGIC:
        raise ValueError(f"{path}: not a feature cache file")
    if version != _CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    offset = struct.calcsize("<4sIIId")
    values = np.frombuffer(blob, dtype="<f4", count=f * t, offset=offset)
    return FeatureMatrix(
        values.reshape(f, t).astype(np.float64),
        hop,
        clip_id or path.stem,
    )
