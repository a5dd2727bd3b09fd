"""Experiment harness: manifest splits, end-to-end train/predict/evaluate runs,
and report serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import eval as ev
from .chunking import labels_from_track
from .core import (
    LabelTrack,
    Manifest,
    ORNAMENT_CLASSES,
    parse_label_track,
    read_wav,
    write_label_track,
)
from .model import Checkpoint, DecodeConfig, ModelConfig, TrainConfig, save_checkpoint, train
from .pipeline import FeaturePlan, build_training_chunks, predict_signal


@dataclass(frozen=True)
class SplitSpec:
    """Declarative train/test partition over manifest fields.

    Filters map manifest fields (singer, raga, split_tag) to a required value
    or list of values. When ``fractions`` is set, the filtered clips are
    shuffled and partitioned train/test/validation; otherwise the train and
    test filters select whole sets, which must be clip-disjoint.
    """

    name: str
    train_filter: dict = field(default_factory=dict)
    test_filter: dict = field(default_factory=dict)
    fractions: tuple[float, float, float] | None = None

    @classmethod
    def from_json(cls, d: dict) -> "SplitSpec":
        unknown = set(d) - {"name", "train_filter", "test_filter", "fractions"}
        if unknown:
            raise ValueError(f"unknown split keys {sorted(unknown)}")
        fr = d.get("fractions")
        return cls(
            name=d["name"],
            train_filter=d.get("train_filter", {}),
            test_filter=d.get("test_filter", {}),
            fractions=tuple(fr) if fr else None,
        )


def _matches(entry, filt: dict) -> bool:
    for key, want in filt.items():
        have = getattr(entry, key)
        if isinstance(want, (list, tuple)):
            if have not in want:
                return False
        elif have != want:
            return False
    return True


def materialize_split(
    manifest: Manifest, spec: SplitSpec, seed: int = 0
) -> tuple[list[str], list[str], list[str]]:
    """Clip-id lists (train, test, validation)."""
    if spec.fractions is not None:
        pool = [c.clip_id for c in manifest if _matches(c, spec.train_filter)]
        if not pool:
            raise ValueError(f"split {spec.name!r}: no clips match the filter")
        rng = np.random.default_rng(seed)
        order = list(rng.permutation(len(pool)))
        pool = [pool[i] for i in order]
        f_train, f_test, _ = spec.fractions
        n = len(pool)
        n_train = max(1, round(f_train * n))
        n_test = max(1, round(f_test * n))
        n_train = min(n_train, n - 1)
        train_ids = pool[:n_train]
        test_ids = pool[n_train : n_train + n_test]
        val_ids = pool[n_train + n_test :]
        if not test_ids:
            raise ValueError(f"split {spec.name!r}: empty test partition")
        return train_ids, test_ids, val_ids
    train_ids = [c.clip_id for c in manifest if _matches(c, spec.train_filter)]
    test_ids = [c.clip_id for c in manifest if _matches(c, spec.test_filter)]
    if not train_ids or not test_ids:
        raise ValueError(f"split {spec.name!r}: empty train or test partition")
    overlap = set(train_ids) & set(test_ids)
    if overlap:
        raise ValueError(
            f"split {spec.name!r}: train and test share clips {sorted(overlap)}"
        )
    return train_ids, test_ids, []


def load_split(name_or_path: str) -> SplitSpec:
    """Resolve a built-in split name (exp1..exp9) or a JSON file path."""
    path = Path(name_or_path)
    if path.exists():
        return SplitSpec.from_json(json.loads(path.read_text()))
    ref = resources.files("ornadetect.splits").joinpath(f"{name_or_path}.json")
    if not ref.is_file():
        raise ValueError(f"unknown split {name_or_path!r}")
    return SplitSpec.from_json(json.loads(ref.read_text()))


def load_labels(manifest: Manifest, labels_dir: str | Path,
                clip_ids: list[str]) -> dict[str, LabelTrack]:
    labels_dir = Path(labels_dir)
    out = {}
    for cid in clip_ids:
        out[cid] = parse_label_track(
            (labels_dir / f"{cid}.tsv").read_text(), clip_id=cid
        )
    return out


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]


def evaluate_clips(
    predictions: dict[str, "PredOutcome"],
    truths: dict[str, LabelTrack],
    collar: ev.CollarConfig,
) -> dict:
    frame_total = ev.MetricSet()
    event_total = ev.MetricSet()
    event_zero = ev.MetricSet()
    confusion = np.zeros((len(ORNAMENT_CLASSES), len(ORNAMENT_CLASSES)),
                         dtype=np.int64)
    accuracies = []
    for cid, pred in predictions.items():
        truth_ids = labels_from_track(
            truths[cid].events, pred.hop_seconds, len(pred.frame_ids)
        )
        frame_total.merge(ev.frame_metrics(pred.frame_ids, truth_ids))
        confusion += ev.confusion_matrix(pred.frame_ids, truth_ids)
        accuracies.append(ev.frame_accuracy(pred.frame_ids, truth_ids))
        event_total.merge(ev.event_metrics(pred.track, truths[cid], collar))
        event_zero.merge(ev.event_metrics(
            pred.track, truths[cid], ev.CollarConfig(0.0)
        ))
    return {
        "frame": frame_total.to_json(),
        "frame_accuracy": float(np.mean(accuracies)) if accuracies else 0.0,
        "event_collar": event_total.to_json(),
        "event_zero_collar": event_zero.to_json(),
        "confusion": confusion.tolist(),
    }


@dataclass
class PredOutcome:
    track: LabelTrack
    frame_ids: np.ndarray
    hop_seconds: float


def run_experiment(
    manifest: Manifest,
    labels_dir: str | Path,
    split: SplitSpec,
    plan: FeaturePlan,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    out_dir: str | Path,
    collar: ev.CollarConfig | None = None,
    decode_cfg: DecodeConfig | None = None,
) -> dict:
    """Train on the split's train clips, predict and score its test clips,
    and write the report plus artifacts under ``out_dir``."""
    collar = collar or ev.CollarConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ids, test_ids, val_ids = materialize_split(manifest, split, tcfg.seed)
    labels = load_labels(manifest, labels_dir, train_ids + test_ids)

    dataset = []
    for cid in train_ids:
        signal, sr = read_wav(manifest.wav_path(cid))
        if sr != plan.stft.sample_rate:
            raise ValueError(f"{cid}: sample rate {sr} != {plan.stft.sample_rate}")
        dataset.extend(build_training_chunks(signal, labels[cid], plan, mcfg))

    result = train(dataset, mcfg, tcfg)
    save_checkpoint(result.checkpoint, out_dir / "model.ckpt")

    predictions: dict[str, PredOutcome] = {}
    pred_dir = out_dir / "predictions"
    pred_dir.mkdir(exist_ok=True)
    for cid in test_ids:
        signal, _ = read_wav(manifest.wav_path(cid))
        pred = predict_signal(result.checkpoint, signal, plan, decode_cfg, cid)
        (pred_dir / f"{cid}.tsv").write_text(write_label_track(pred.track))
        predictions[cid] = PredOutcome(pred.track, pred.frame_ids,
                                       pred.hop_seconds)

    body = evaluate_clips(predictions, labels, collar)
    report = {
        "split": split.name,
        "config_hash": config_hash({
            "model": mcfg.to_json(),
            "train": {"epochs": tcfg.epochs, "learning_rate": tcfg.learning_rate,
                      "batch_size": tcfg.batch_size, "seed": tcfg.seed},
            "bins": plan.chroma.bins,
            "chunk_seconds": plan.chunk_seconds,
            "collar": collar.collar_seconds,
        }),
        "train_clips": train_ids,
        "test_clips": test_ids,
        "validation_clips": val_ids,
        "final_train_loss": result.loss_curve[-1] if result.loss_curve else None,
        "epochs_run": len(result.loss_curve),
        **body,
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    rows = [",".join(str(v) for v in row) for row in body["confusion"]]
    (out_dir / "confusion.csv").write_text("\n".join(rows) + "\n")
    return report
