"""Glue between audio, features, chunk plans, and the model: training-set
assembly and whole-clip prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import chunking, dsp
from .core import LabelTrack
from .model import Checkpoint, DecodeConfig, ModelConfig, decode_events_with_confidence, forward


@dataclass(frozen=True)
class FeaturePlan:
    """Shared framing decisions for one run."""

    stft: dsp.StftConfig
    chroma: dsp.ChromaConfig
    chunk_seconds: float = 10.0

    @property
    def hop_seconds(self) -> float:
        return self.stft.hop_seconds

    def frame_target(self, depth: int) -> int:
        return chunking.padded_frame_target(
            self.chunk_seconds, self.stft.sample_rate, self.stft.window_length,
            self.stft.hop, depth,
        )


def default_plan(bins: int = 120, chunk_seconds: float = 10.0,
                 sample_rate: int = 44100) -> FeaturePlan:
    if sample_rate == 44100:
        stft = dsp.StftConfig()
    else:
        stft = dsp.StftConfig.for_sample_rate(sample_rate)
    return FeaturePlan(stft, dsp.ChromaConfig(bins=bins), chunk_seconds)


def pad_features(values: np.ndarray, target: int) -> np.ndarray:
    f, t = values.shape
    if t > target:
        raise ValueError(f"chunk has {t} frames, exceeding the pad target {target}")
    if t == target:
        return values
    out = np.zeros((f, target), dtype=values.dtype)
    out[:, :t] = values
    return out


def build_training_chunks(
    signal: np.ndarray,
    track: LabelTrack,
    plan: FeaturePlan,
    mcfg: ModelConfig,
) -> list[tuple[dsp.FeatureMatrix, chunking.FrameLabels]]:
    """Chunk one labeled clip into padded (features, frame labels) pairs."""
    sr = plan.stft.sample_rate
    duration = len(signal) / sr
    target = plan.frame_target(mcfg.depth)
    chunks = chunking.plan_chunks(
        duration, track.events, plan.chunk_seconds, clip_id=track.clip_id
    )
    block = 2 ** mcfg.depth
    out = []
    for chunk in chunks:
        lo = int(round(chunk.start * sr))
        hi = int(round(chunk.audio_end * sr))
        fm = dsp.chromagram(signal[lo:hi], plan.stft, plan.chroma,
                            clip_id=track.clip_id)
        # trailing-pad frames never enter the loss, so a mostly-empty tail
        # chunk only needs padding up to its own pooling-friendly length
        pad_to = min(target, ((fm.frames + block - 1) // block) * block)
        labels = chunking.rasterize(chunk, plan.hop_seconds, pad_to, fm.frames)
        if not mcfg.use_dont_care:
            labels = labels.without_masking()
        padded = dsp.FeatureMatrix(
            pad_features(fm.values, pad_to), plan.hop_seconds,
            clip_id=track.clip_id,
        )
        out.append((padded, labels))
    return out


@dataclass(frozen=True)
class Prediction:
    track: LabelTrack
    confidences: tuple[float, ...]
    posteriors: np.ndarray       # classes x clip frames
    frame_ids: np.ndarray        # decoded per-frame classes
    hop_seconds: float


def predict_posteriors(
    checkpoint: Checkpoint, features: np.ndarray, target: int
) -> np.ndarray:
    """Run the network over a whole clip's feature matrix in fixed-size
    frame blocks with 50% overlap, averaging posteriors where blocks meet so
    that events spanning a block seam are not cut in half."""
    cfg = checkpoint.config
    t_clip = features.shape[1]
    acc = np.zeros((cfg.classes, t_clip))
    hits = np.zeros(t_clip)
    step = max(1, target // 2)
    lo = 0
    while True:
        block = features[:, lo : lo + target].astype(np.float32)
        n_real = block.shape[1]
        block = pad_features(block, target)
        post = forward(checkpoint.params, cfg, block, training=False)
        acc[:, lo : lo + n_real] += post[:, :n_real]
        hits[lo : lo + n_real] += 1
        if lo + target >= t_clip:
            break
        lo += step
    return acc / np.maximum(hits, 1)


def predict_signal(
    checkpoint: Checkpoint,
    signal: np.ndarray,
    plan: FeaturePlan,
    decode_cfg: DecodeConfig | None = None,
    clip_id: str = "",
) -> Prediction:
    from .model import decode_frames

    fm = dsp.chromagram(signal, plan.stft, plan.chroma, clip_id=clip_id)
    target = plan.frame_target(checkpoint.config.depth)
    posteriors = predict_posteriors(checkpoint, fm.values, target)
    track, conf = decode_events_with_confidence(
        posteriors, plan.hop_seconds, decode_cfg, clip_id=clip_id
    )
    return Prediction(
        track=track,
        confidences=tuple(conf),
        posteriors=posteriors,
        frame_ids=decode_frames(posteriors, decode_cfg),
        hop_seconds=plan.hop_seconds,
    )
