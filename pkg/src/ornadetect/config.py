"""Run configuration: one JSON document covering features, chunking, model,
training, decoding, and evaluation. Parsed strictly: unknown keys are errors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsp import ChromaConfig, StftConfig
from .eval import CollarConfig
from .model import DecodeConfig, ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


_SECTIONS = {
    "stft": {"sample_rate", "fft_size", "window_length", "hop"},
    "chroma": {"bins", "tuning_a4_hz", "min_freq", "max_freq"},
    "chunking": {"t"},
    "model": {
        "input_bins", "classes", "encoder_filters", "decoder_filters",
        "kernel_size", "encoder_dilations", "decoder_dilations", "dropout",
        "periodic_pad", "use_periodic_pad", "use_dilation", "use_dont_care",
    },
    "train": {
        "epochs", "learning_rate", "batch_size", "seed", "checkpoint_every",
        "checkpoint_dir", "early_stop_patience", "target_loss", "log_path",
    },
    "collar": {"collar_seconds", "onset_only"},
    "decode": {"median_width", "min_event_frames"},
}


@dataclass(frozen=True)
class RunConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    chroma: ChromaConfig = field(default_factory=ChromaConfig)
    chunk_seconds: float = 10.0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    collar: CollarConfig = field(default_factory=CollarConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def to_json(self) -> dict:
        return {
            "stft": {
                "sample_rate": self.stft.sample_rate,
                "fft_size": self.stft.fft_size,
                "window_length": self.stft.window_length,
                "hop": self.stft.hop,
            },
            "chroma": {
                "bins": self.chroma.bins,
                "tuning_a4_hz": self.chroma.tuning_a4_hz,
                "min_freq": self.chroma.min_freq,
                "max_freq": self.chroma.max_freq,
            },
            "chunking": {"t": self.chunk_seconds},
            "model": self.model.to_json(),
            "train": {
                "epochs": self.train.epochs,
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "seed": self.train.seed,
            },
            "collar": {
                "collar_seconds": self.collar.collar_seconds,
                "onset_only": self.collar.onset_only,
            },
            "decode": {
                "median_width": self.decode.median_width,
                "min_event_frames": self.decode.min_event_frames,
            },
        }


def _strict(section: str, doc: dict) -> dict:
    allowed = _SECTIONS[section]
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(
            f"section {section!r}: unknown keys {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )
    return doc


def _tupled(doc: dict, keys: tuple[str, ...]) -> dict:
    out = dict(doc)
    for k in keys:
        if k in out and isinstance(out[k], list):
            out[k] = tuple(out[k])
    return out


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(
            f"unknown config sections {sorted(unknown)}; "
            f"allowed: {sorted(_SECTIONS)}"
        )
    try:
        stft = StftConfig(**_strict("stft", doc.get("stft", {})))
        chroma = ChromaConfig(**_strict("chroma", doc.get("chroma", {})))
        chunk_seconds = _strict("chunking", doc.get("chunking", {})).get("t", 10.0)
        model = ModelConfig(**_tupled(
            _strict("model", doc.get("model", {})),
            ("encoder_filters", "decoder_filters", "encoder_dilations",
             "decoder_dilations"),
        ))
        train = TrainConfig(**_strict("train", doc.get("train", {})))
        collar = CollarConfig(**_strict("collar", doc.get("collar", {})))
        decode = DecodeConfig(**_strict("decode", doc.get("decode", {})))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if chunk_seconds <= 0:
        raise ConfigError("chunking.t must be positive")
    if "input_bins" not in doc.get("model", {}):
        # model input follows the feature resolution unless pinned explicitly
        from dataclasses import replace
        model = replace(model, input_bins=chroma.bins)
    elif model.input_bins != chroma.bins:
        raise ConfigError(
            f"model.input_bins {model.input_bins} != chroma.bins {chroma.bins}"
        )
    return RunConfig(stft, chroma, chunk_seconds, model, train, collar, decode)


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_run_config(json.loads(Path(path).read_text()))
