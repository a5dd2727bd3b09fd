"""Scikit-learn style estimator wrapping the full detection pipeline, so the
detector composes with ecosystem tooling (get_params/set_params, cloning,
grid search over hyperparameters)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import LabelTrack
from .eval import CollarConfig, event_metrics_many
from .model import Checkpoint, DecodeConfig, ModelConfig, TrainConfig, train
from .pipeline import build_training_chunks, default_plan, predict_signal


def _check_signals(X) -> list[np.ndarray]:
    signals = []
    for i, x in enumerate(X):
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"clip {i}: expected a mono 1-D signal, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError(f"clip {i}: empty signal")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"clip {i}: non-finite samples")
        signals.append(arr)
    if not signals:
        raise ValueError("need at least one clip")
    return signals


def _check_tracks(y, n: int) -> list[LabelTrack]:
    if len(y) != n:
        raise ValueError(f"got {n} clips but {len(y)} label tracks")
    for i, track in enumerate(y):
        if not isinstance(track, LabelTrack):
            raise TypeError(f"y[{i}] must be a LabelTrack, got {type(track).__name__}")
    return list(y)


class OrnamentDetector(BaseEstimator):
    """Frame-wise ornament detector with event decoding.

    fit(X, y) takes mono signals (1-D float arrays at ``sample_rate``) and
    their LabelTracks; predict(X) returns one LabelTrack per signal.
    """

    def __init__(
        self,
        bins: int = 120,
        sample_rate: int = 44100,
        chunk_seconds: float = 10.0,
        epochs: int = 300,
        learning_rate: float = 1e-3,
        batch_size: int = 8,
        dropout: float = 0.3,
        periodic_pad: int = 2,
        use_periodic_pad: bool = True,
        use_dilation: bool = True,
        use_dont_care: bool = True,
        target_loss: float | None = None,
        median_width: int = 5,
        min_event_frames: int = 3,
        collar_seconds: float = 0.2,
        random_state: int = 0,
    ):
        self.bins = bins
        self.sample_rate = sample_rate
        self.chunk_seconds = chunk_seconds
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dropout = dropout
        self.periodic_pad = periodic_pad
        self.use_periodic_pad = use_periodic_pad
        self.use_dilation = use_dilation
        self.use_dont_care = use_dont_care
        self.target_loss = target_loss
        self.median_width = median_width
        self.min_event_frames = min_event_frames
        self.collar_seconds = collar_seconds
        self.random_state = random_state

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            input_bins=self.bins,
            dropout=self.dropout,
            periodic_pad=self.periodic_pad,
            use_periodic_pad=self.use_periodic_pad,
            use_dilation=self.use_dilation,
            use_dont_care=self.use_dont_care,
        )

    def _decode_config(self) -> DecodeConfig:
        return DecodeConfig(self.median_width, self.min_event_frames)

    def fit(self, X, y) -> "OrnamentDetector":
        signals = _check_signals(X)
        tracks = _check_tracks(y, len(signals))
        plan = default_plan(self.bins, self.chunk_seconds, self.sample_rate)
        mcfg = self._model_config()
        dataset = []
        for signal, track in zip(signals, tracks):
            dataset.extend(build_training_chunks(signal, track, plan, mcfg))
        tcfg = TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.random_state,
            target_loss=self.target_loss,
        )
        result = train(dataset, mcfg, tcfg)
        self.plan_ = plan
        self.checkpoint_ = result.checkpoint
        self.loss_curve_ = result.loss_curve
        return self

    def _require_fitted(self) -> Checkpoint:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError("call fit before predict")
        return self.checkpoint_

    def predict(self, X) -> list[LabelTrack]:
        ckpt = self._require_fitted()
        decode = self._decode_config()
        return [
            predict_signal(ckpt, s, self.plan_, decode, clip_id=str(i)).track
            for i, s in enumerate(_check_signals(X))
        ]

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per-clip posterior matrices (classes x frames)."""
        ckpt = self._require_fitted()
        return [
            predict_signal(ckpt, s, self.plan_, self._decode_config()).posteriors
            for s in _check_signals(X)
        ]

    def score(self, X, y) -> float:
        """Macro event F1 at the configured collar."""
        preds = self.predict(X)
        truths = _check_tracks(y, len(preds))
        pairs = list(zip(preds, truths))
        return event_metrics_many(pairs, CollarConfig(self.collar_seconds)).macro()["f1"]
