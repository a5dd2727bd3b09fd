"""Encoder-decoder temporal convolutional network for frame-wise ornament
classification, with masked-loss training, checkpointing, fine-tuning, and
frame-to-event decoding."""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import median_filter

from . import nn
from .chunking import FrameLabels
from .core import BACKGROUND, Event, LabelTrack, OrnamentClass
from .dsp import FeatureMatrix


class NoValidFrames(ValueError):
    """Raised when every frame of a chunk is masked out of the loss."""


@dataclass(frozen=True)
class ModelConfig:
    input_bins: int = 120
    classes: int = 7  # six ornaments + background
    encoder_filters: tuple[int, ...] = (32, 64, 128, 256)
    decoder_filters: tuple[int, ...] = (256, 128, 64, 32)
    kernel_size: int = 5
    encoder_dilations: tuple[int, ...] = (1, 2, 3, 4)
    decoder_dilations: tuple[int, ...] = (4, 3, 2, 1)
    dropout: float = 0.3
    periodic_pad: int = 2
    use_periodic_pad: bool = True
    use_dilation: bool = True
    use_dont_care: bool = True

    def __post_init__(self):
        if self.encoder_filters != tuple(reversed(self.decoder_filters)):
            raise ValueError("decoder filters must mirror encoder filters")
        if not (len(self.encoder_filters) == len(self.encoder_dilations)
                == len(self.decoder_dilations)):
            raise ValueError("filter and dilation lists must share one length")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")

    @property
    def depth(self) -> int:
        return len(self.encoder_filters)

    @property
    def network_input_bins(self) -> int:
        if self.use_periodic_pad:
            return self.input_bins + 2 * self.periodic_pad
        return self.input_bins

    def dilation(self, rates: tuple[int, ...], layer: int) -> int:
        return rates[layer] if self.use_dilation else 1

    def to_json(self) -> dict:
        return {
            "input_bins": self.input_bins,
            "classes": self.classes,
            "encoder_filters": list(self.encoder_filters),
            "decoder_filters": list(self.decoder_filters),
            "kernel_size": self.kernel_size,
            "encoder_dilations": list(self.encoder_dilations),
            "decoder_dilations": list(self.decoder_dilations),
            "dropout": self.dropout,
            "periodic_pad": self.periodic_pad,
            "use_periodic_pad": self.use_periodic_pad,
            "use_dilation": self.use_dilation,
            "use_dont_care": self.use_dont_care,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("encoder_filters", "decoder_filters", "encoder_dilations",
                    "decoder_dilations"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    learning_rate: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    checkpoint_every: int = 0       # 0 disables periodic checkpoints
    checkpoint_dir: str | None = None
    early_stop_patience: int | None = None
    target_loss: float | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def init_params(cfg: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict:
    params: dict[str, np.ndarray] = {}
    c_in = cfg.network_input_bins
    d = cfg.kernel_size
    for i, f in enumerate(cfg.encoder_filters, start=1):
        params[f"enc{i}.W"] = nn.he_uniform((f, c_in, d), c_in * d, rng, dtype)
        params[f"enc{i}.b"] = np.zeros(f, dtype=dtype)
        c_in = f
    for i, f in enumerate(cfg.decoder_filters, start=1):
        params[f"dec{i}.W"] = nn.he_uniform((f, c_in, d), c_in * d, rng, dtype)
        params[f"dec{i}.b"] = np.zeros(f, dtype=dtype)
        c_in = f
    params["cls.U"] = nn.he_uniform((cfg.classes, c_in), c_in, rng, dtype)
    params["cls.b"] = np.zeros(cfg.classes, dtype=dtype)
    return params


def _check_input(cfg: ModelConfig, x: np.ndarray) -> None:
    if x.shape[0] != cfg.input_bins:
        raise ValueError(f"input has {x.shape[0]} bins, config expects {cfg.input_bins}")
    if x.shape[1] % (2 ** cfg.depth) != 0:
        raise ValueError(
            f"frame count {x.shape[1]} must be divisible by {2 ** cfg.depth}"
        )


def forward(
    params: dict,
    cfg: ModelConfig,
    x: np.ndarray,
    rng: np.random.Generator | None = None,
    training: bool = False,
    want_cache: bool = False,
):
    """Posterior matrix (classes x frames); columns sum to 1."""
    _check_input(cfg, x)
    cache: dict = {}
    h = x
    if cfg.use_periodic_pad:
        h = nn.periodic_pad(h, cfg.periodic_pad)
    for i in range(1, cfg.depth + 1):
        w, b = params[f"enc{i}.W"], params[f"enc{i}.b"]
        rate = cfg.dilation(cfg.encoder_dilations, i - 1)
        pre, cols = nn.dilated_conv1d(h, w, b, rate, return_cols=True)
        act = nn.relu(pre)
        dropped, scale = nn.spatial_dropout(act, cfg.dropout, rng, training)
        pooled, idx = nn.temporal_maxpool(dropped)
        cache[f"enc{i}"] = (h, cols, pre, scale, idx)
        h = pooled
    for i in range(1, cfg.depth + 1):
        w, b = params[f"dec{i}.W"], params[f"dec{i}.b"]
        rate = cfg.dilation(cfg.decoder_dilations, i - 1)
        up = nn.temporal_upsample(h)
        pre, cols = nn.dilated_conv1d(up, w, b, rate, return_cols=True)
        act = nn.relu(pre)
        dropped, scale = nn.spatial_dropout(act, cfg.dropout, rng, training)
        cache[f"dec{i}"] = (up, cols, pre, scale)
        h = dropped
    logits = nn.dense_timedistributed(h, params["cls.U"], params["cls.b"])
    posteriors = nn.softmax_frames(logits)
    if want_cache:
        cache["cls_in"] = h
        return posteriors, cache
    return posteriors


def backward(
    params: dict, cfg: ModelConfig, cache: dict, grad_logits: np.ndarray
) -> tuple[dict, np.ndarray]:
    """Gradients for every parameter plus the gradient w.r.t. the input."""
    grads: dict[str, np.ndarray] = {}
    g, grads["cls.U"], grads["cls.b"] = nn.dense_timedistributed_backward(
        cache["cls_in"], params["cls.U"], grad_logits
    )
    for i in range(cfg.depth, 0, -1):
        up, cols, pre, scale = cache[f"dec{i}"]
        rate = cfg.dilation(cfg.decoder_dilations, i - 1)
        g = nn.spatial_dropout_backward(g, scale)
        g = nn.relu_backward(pre, g)
        g, grads[f"dec{i}.W"], grads[f"dec{i}.b"] = nn.dilated_conv1d_backward(
            up, params[f"dec{i}.W"], g, rate, cols
        )
        g = nn.temporal_upsample_backward(g)
    for i in range(cfg.depth, 0, -1):
        h_in, cols, pre, scale, idx = cache[f"enc{i}"]
        rate = cfg.dilation(cfg.encoder_dilations, i - 1)
        g = nn.temporal_maxpool_backward(g, idx)
        g = nn.spatial_dropout_backward(g, scale)
        g = nn.relu_backward(pre, g)
        g, grads[f"enc{i}.W"], grads[f"enc{i}.b"] = nn.dilated_conv1d_backward(
            h_in, params[f"enc{i}.W"], g, rate, cols
        )
    if cfg.use_periodic_pad:
        g = nn.periodic_pad_backward(g, cfg.periodic_pad)
    return grads, g


def masked_cross_entropy(
    posteriors: np.ndarray, labels: FrameLabels
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over non-masked frames, and the loss
    gradient w.r.t. the classifier logits (exactly zero at masked frames)."""
    if posteriors.shape[1] != len(labels):
        raise ValueError("posteriors and labels disagree on frame count")
    valid = labels.valid
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidFrames("every frame of this chunk is masked")
    cols = np.flatnonzero(valid)
    targets = labels.class_ids[cols].astype(np.int64)
    p_true = posteriors[targets, cols]
    tiny = np.finfo(posteriors.dtype).tiny
    loss = float(-np.log(np.maximum(p_true, tiny)).sum(dtype=np.float64) / n_valid)

    grad = np.zeros_like(posteriors)
    grad[:, cols] = posteriors[:, cols]
    grad[targets, cols] -= 1.0
    grad[:, cols] /= n_valid
    return loss, grad


def chunk_loss_and_grads(
    params: dict,
    cfg: ModelConfig,
    features: np.ndarray,
    labels: FrameLabels,
    rng: np.random.Generator | None,
    training: bool = True,
) -> tuple[float, dict]:
    posteriors, cache = forward(
        params, cfg, features, rng=rng, training=training, want_cache=True
    )
    loss, grad_logits = masked_cross_entropy(posteriors, labels)
    grads, _ = backward(params, cfg, cache, grad_logits)
    return loss, grads


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    meta: dict = field(default_factory=dict)


_CKPT_MAGIC = b"ORNA1"


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = sorted(ckpt.params)
    header = {
        "config": ckpt.config.to_json(),
        "meta": ckpt.meta,
        "tensors": [
            {"name": n, "shape": list(ckpt.params[n].shape)} for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if blob[:5] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<I", blob, 5)
    header = json.loads(blob[9 : 9 + hlen].decode("utf-8"))
    params = {}
    offset = 9 + hlen
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[spec["name"]] = arr.reshape(shape).copy()
        offset += count * 4
    return Checkpoint(ModelConfig.from_json(header["config"]), params,
                      header.get("meta", {}))


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_curve: list[float]
    skipped_chunks: int


def _as_array(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.values
    return np.asarray(features)


def train(
    dataset: list[tuple],
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    init: dict | None = None,
    trainable_prefixes: tuple[str, ...] | None = None,
) -> TrainResult:
    """Mini-batch Adam training; deterministic for a given seed.

    ``dataset`` is a list of (features, FrameLabels) with equal shapes across
    chunks. Chunks with no unmasked frame are skipped with a logged count.
    ``trainable_prefixes`` restricts updates to matching parameter names
    (used by fine-tuning); everything else stays bit-identical.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    rng = np.random.default_rng(tcfg.seed)
    params = init if init is not None else init_params(mcfg, rng)

    usable: list[tuple[np.ndarray, FrameLabels]] = []
    skipped = 0
    for features, labels in dataset:
        arr = np.ascontiguousarray(_as_array(features), dtype=np.float32)
        if not labels.valid.any():
            skipped += 1
            continue
        usable.append((arr, labels))
    if not usable:
        raise NoValidFrames("every chunk in the dataset is fully masked")

    if trainable_prefixes is None:
        trainable = dict(params)
    else:
        trainable = {
            n: p for n, p in params.items()
            if any(n.startswith(pre) for pre in trainable_prefixes)
        }
    adam = nn.AdamState.for_params(trainable, tcfg.learning_rate)

    log_file = open(tcfg.log_path, "a") if tcfg.log_path else None
    loss_curve: list[float] = []
    best_loss = np.inf
    stall = 0
    try:
        for epoch in range(tcfg.epochs):
            t0 = time.monotonic()
            order = rng.permutation(len(usable))
            epoch_loss = 0.0
            for lo in range(0, len(order), tcfg.batch_size):
                batch = order[lo : lo + tcfg.batch_size]
                summed: dict[str, np.ndarray] = {}
                batch_loss = 0.0
                for j in batch:
                    features, labels = usable[j]
                    loss, grads = chunk_loss_and_grads(
                        params, mcfg, features, labels, rng
                    )
                    if not np.isfinite(loss):
                        raise FloatingPointError(
                            f"non-finite loss {loss} at epoch {epoch}, chunk {j}"
                        )
                    batch_loss += loss
                    for name in trainable:
                        if name in summed:
                            summed[name] += grads[name]
                        else:
                            summed[name] = grads[name]
                for name in summed:
                    summed[name] /= len(batch)
                adam_params = {n: params[n] for n in trainable}
                nn.adam_step(adam_params, summed, adam)
                epoch_loss += batch_loss
            mean_loss = epoch_loss / len(order)
            loss_curve.append(mean_loss)
            if log_file:
                log_file.write(json.dumps({
                    "epoch": epoch,
                    "loss": mean_loss,
                    "seconds": round(time.monotonic() - t0, 3),
                }) + "\n")
                log_file.flush()
            if tcfg.checkpoint_every and tcfg.checkpoint_dir and (
                (epoch + 1) % tcfg.checkpoint_every == 0
            ):
                snap = Checkpoint(mcfg, params, {
                    "epoch": epoch, "loss": mean_loss, "seed": tcfg.seed,
                })
                save_checkpoint(
                    snap, Path(tcfg.checkpoint_dir) / f"epoch{epoch + 1:05d}.ckpt"
                )
            if tcfg.target_loss is not None and mean_loss <= tcfg.target_loss:
                break
            if tcfg.early_stop_patience is not None:
                if mean_loss < best_loss - 1e-6:
                    best_loss = mean_loss
                    stall = 0
                else:
                    stall += 1
                    if stall >= tcfg.early_stop_patience:
                        break
    finally:
        if log_file:
            log_file.close()

    meta = {
        "epochs_run": len(loss_curve),
        "loss": loss_curve[-1] if loss_curve else None,
        "seed": tcfg.seed,
        "skipped_chunks": skipped,
    }
    return TrainResult(Checkpoint(mcfg, params, meta), loss_curve, skipped)


def fine_tune(
    checkpoint: Checkpoint,
    dataset: list[tuple],
    tcfg: TrainConfig,
    trainable_prefixes: tuple[str, ...] = ("dec", "cls"),
) -> Checkpoint:
    """Adapt a trained model to new data with the encoder frozen bit-exactly."""
    if dataset:
        bins = _as_array(dataset[0][0]).shape[0]
        if bins != checkpoint.config.input_bins:
            raise ValueError(
                f"dataset has {bins} bins, checkpoint expects "
                f"{checkpoint.config.input_bins}"
            )
    params = {n: p.copy() for n, p in checkpoint.params.items()}
    if tcfg.epochs == 0:
        return Checkpoint(checkpoint.config, params, dict(checkpoint.meta))
    result = train(dataset, checkpoint.config, tcfg, init=params,
                   trainable_prefixes=trainable_prefixes)
    result.checkpoint.meta["fine_tuned_from"] = checkpoint.meta.get("epochs_run")
    return result.checkpoint


@dataclass(frozen=True)
class DecodeConfig:
    median_width: int = 5
    min_event_frames: int = 3


def decode_frames(posteriors: np.ndarray, cfg: DecodeConfig | None = None
                  ) -> np.ndarray:
    """Per-frame class decisions: argmax smoothed by a median filter."""
    cfg = cfg or DecodeConfig()
    ids = posteriors.argmax(axis=0).astype(np.int64)
    if cfg.median_width > 1 and ids.size:
        ids = median_filter(ids, size=cfg.median_width, mode="nearest")
    return ids


def decode_events_with_confidence(
    posteriors: np.ndarray,
    frame_hop_seconds: float,
    cfg: DecodeConfig | None = None,
    clip_id: str = "",
) -> tuple[LabelTrack, list[float]]:
    """Merge equal-class frame runs into events; confidence is the mean
    posterior of the event's class over its frames."""
    cfg = cfg or DecodeConfig()
    ids = decode_frames(posteriors, cfg)
    events: list[Event] = []
    confidences: list[float] = []
    t = len(ids)
    i = 0
    while i < t:
        j = i + 1
        while j < t and ids[j] == ids[i]:
            j += 1
        cls = int(ids[i])
        if cls != BACKGROUND and (j - i) >= cfg.min_event_frames:
            events.append(Event(
                i * frame_hop_seconds, j * frame_hop_seconds, OrnamentClass(cls)
            ))
            confidences.append(float(posteriors[cls, i:j].mean()))
        i = j
    return LabelTrack(clip_id, tuple(events)), confidences


def decode_events(
    posteriors: np.ndarray,
    frame_hop_seconds: float,
    cfg: DecodeConfig | None = None,
    clip_id: str = "",
) -> LabelTrack:
    track, _ = decode_events_with_confidence(
        posteriors, frame_hop_seconds, cfg, clip_id
    )
    return track
