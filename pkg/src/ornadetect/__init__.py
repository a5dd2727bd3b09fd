"""Detection and temporal localization of vocal ornaments in Indian Art Music."""

from .core import (
    BACKGROUND,
    DONT_CARE,
    DurationRules,
    Event,
    LabelTrack,
    Manifest,
    OrnamentClass,
    parse_label_track,
    validate_events,
    write_label_track,
)
from .dsp import ChromaConfig, FeatureMatrix, PitchTrack, StftConfig, chromagram, pitch_track, stft
from .chunking import ChunkPlan, FrameLabels, plan_chunks, rasterize
from .estimator import OrnamentDetector
from .eval import CollarConfig, cohen_kappa, confusion_matrix, event_metrics, frame_metrics
from .model import (
    Checkpoint,
    DecodeConfig,
    ModelConfig,
    TrainConfig,
    decode_events,
    load_checkpoint,
    masked_cross_entropy,
    save_checkpoint,
    train,
)
from .synth import OrnamentSpec, synth_dataset, synth_ornament

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "DONT_CARE",
    "ChromaConfig",
    "ChunkPlan",
    "Checkpoint",
    "CollarConfig",
    "DecodeConfig",
    "DurationRules",
    "Event",
    "FeatureMatrix",
    "FrameLabels",
    "LabelTrack",
    "Manifest",
    "ModelConfig",
    "OrnamentClass",
    "OrnamentDetector",
    "OrnamentSpec",
    "PitchTrack",
    "StftConfig",
    "TrainConfig",
    "chromagram",
    "cohen_kappa",
    "confusion_matrix",
    "decode_events",
    "event_metrics",
    "frame_metrics",
    "load_checkpoint",
    "masked_cross_entropy",
    "parse_label_track",
    "pitch_track",
    "plan_chunks",
    "rasterize",
    "save_checkpoint",
    "stft",
    "synth_dataset",
    "synth_ornament",
    "train",
    "validate_events",
    "write_label_track",
]
