"""Command-line entry point: synth, features, chunk, train, predict, eval,
kappa, experiment, serve."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import chunking, dsp
from .config import ConfigError, RunConfig, load_run_config
from .core import (
    LabelError,
    load_manifest,
    parse_label_track,
    read_wav,
    write_label_track,
)
from .eval import CollarConfig, cohen_kappa, confusion_matrix, event_metrics, frame_metrics
from .experiment import load_labels, load_split, run_experiment
from .model import TrainConfig, load_checkpoint, save_checkpoint, train
from .pipeline import FeaturePlan, build_training_chunks, predict_signal
from .synth import synth_dataset


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _plan_from_config(cfg: RunConfig) -> FeaturePlan:
    return FeaturePlan(cfg.stft, cfg.chroma, cfg.chunk_seconds)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """CLI flags take precedence over the config file."""
    if getattr(args, "bins", None) is not None:
        cfg = replace(cfg, chroma=replace(cfg.chroma, bins=args.bins),
                      model=replace(cfg.model, input_bins=args.bins))
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    if getattr(args, "collar", None) is not None:
        cfg = replace(cfg, collar=replace(cfg.collar,
                                          collar_seconds=args.collar))
    if getattr(args, "no_dont_care", False):
        cfg = replace(cfg, model=replace(cfg.model, use_dont_care=False))
    if getattr(args, "no_periodic_pad", False):
        cfg = replace(cfg, model=replace(cfg.model, use_periodic_pad=False))
    if getattr(args, "no_dilation", False):
        cfg = replace(cfg, model=replace(cfg.model, use_dilation=False))
    return cfg


def _load_dataset(manifest_path: str, labels_dir: str | None, cfg: RunConfig):
    manifest = load_manifest(manifest_path)
    labels_root = Path(labels_dir) if labels_dir else Path(manifest_path).parent / "labels"
    plan = _plan_from_config(cfg)
    ids = [c.clip_id for c in manifest]
    labels = load_labels(manifest, labels_root, ids)
    dataset = []
    for cid in ids:
        signal, sr = read_wav(manifest.wav_path(cid))
        if sr != plan.stft.sample_rate:
            raise ValueError(f"{cid}: sample rate {sr} != {plan.stft.sample_rate}")
        dataset.extend(build_training_chunks(signal, labels[cid], plan, cfg.model))
    return manifest, labels, dataset, plan


def cmd_synth(args) -> int:
    out = Path(args.out)
    manifest = synth_dataset(out, args.n, clip_seconds=args.seconds,
                             seed=args.seed)
    _progress(f"wrote {len(manifest)} clips under {out}")
    return 0


def cmd_features(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plan = _plan_from_config(cfg)
    for entry in manifest:
        signal, sr = read_wav(manifest.wav_path(entry.clip_id))
        if sr != plan.stft.sample_rate:
            raise ValueError(
                f"{entry.clip_id}: sample rate {sr} != {plan.stft.sample_rate}"
            )
        fm = dsp.chromagram(signal, plan.stft, plan.chroma, entry.clip_id)
        dsp.save_features(out / f"{entry.clip_id}.feat", fm)
        _progress(f"{entry.clip_id}: {fm.bins}x{fm.frames}")
    return 0


def cmd_chunk(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    manifest = load_manifest(args.manifest)
    labels_root = Path(args.labels) if args.labels else Path(args.manifest).parent / "labels"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry in manifest:
        signal, sr = read_wav(manifest.wav_path(entry.clip_id))
        track = parse_label_track(
            (labels_root / f"{entry.clip_id}.tsv").read_text(), entry.clip_id
        )
        plans = chunking.plan_chunks(
            len(signal) / sr, track.events, cfg.chunk_seconds, entry.clip_id
        )
        (out / f"{entry.clip_id}.chunks.json").write_text(
            chunking.chunk_plans_to_json(plans)
        )
        _progress(f"{entry.clip_id}: {len(plans)} chunks")
    return 0


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    _, _, dataset, _ = _load_dataset(args.manifest, args.labels, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train
    if args.log:
        tcfg = replace(tcfg, log_path=args.log)
    result = train(dataset, cfg.model, tcfg)
    save_checkpoint(result.checkpoint, out)
    _progress(
        f"trained {len(result.loss_curve)} epochs, "
        f"final loss {result.loss_curve[-1]:.4f}" if result.loss_curve
        else "trained 0 epochs (checkpoint is the initialization)"
    )
    return 0


def cmd_predict(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    ckpt = load_checkpoint(args.checkpoint)
    plan = FeaturePlan(cfg.stft, replace(cfg.chroma, bins=ckpt.config.input_bins),
                       cfg.chunk_seconds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest:
        manifest = load_manifest(args.manifest)
        clips = [(c.clip_id, manifest.wav_path(c.clip_id)) for c in manifest]
    else:
        clips = [(Path(p).stem, Path(p)) for p in args.wav]
    for cid, path in clips:
        signal, _ = read_wav(path)
        pred = predict_signal(ckpt, signal, plan, cfg.decode, cid)
        (out / f"{cid}.tsv").write_text(write_label_track(pred.track))
        _progress(f"{cid}: {len(pred.track.events)} events")
    return 0


def _frames_for_tracks(tracks, hop: float, duration: float | None) -> int:
    last = max((t.events[-1].offset for t in tracks if t.events), default=0.0)
    end = duration if duration is not None else last
    return max(1, int(np.ceil(end / hop)) + 1)


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    pred = parse_label_track(Path(args.pred).read_text(), "pred")
    truth = parse_label_track(Path(args.truth).read_text(), "truth")
    hop = cfg.stft.hop_seconds
    n = _frames_for_tracks([pred, truth], hop, args.duration)
    pred_ids = chunking.labels_from_track(pred.events, hop, n)
    truth_ids = chunking.labels_from_track(truth.events, hop, n)
    report = {
        "frame": frame_metrics(pred_ids, truth_ids).to_json(),
        "event_collar": event_metrics(pred, truth, cfg.collar).to_json(),
        "confusion": confusion_matrix(pred_ids, truth_ids).tolist(),
        "collar_seconds": cfg.collar.collar_seconds,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_kappa(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    a = parse_label_track(Path(args.a).read_text(), "a")
    b = parse_label_track(Path(args.b).read_text(), "b")
    hop = cfg.stft.hop_seconds
    n = _frames_for_tracks([a, b], hop, args.duration)
    ids_a = chunking.labels_from_track(a.events, hop, n)
    ids_b = chunking.labels_from_track(b.events, hop, n)
    print(json.dumps({"kappa": cohen_kappa(ids_a, ids_b)}))
    return 0


def cmd_experiment(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    manifest = load_manifest(args.manifest)
    labels_root = Path(args.labels) if args.labels else Path(args.manifest).parent / "labels"
    split = load_split(args.split)
    report = run_experiment(
        manifest, labels_root, split, _plan_from_config(cfg), cfg.model,
        cfg.train, args.out, cfg.collar, cfg.decode,
    )
    _progress(
        f"{split.name}: frame acc {report['frame_accuracy']:.3f}, "
        f"event F1 {report['event_collar']['macro']['f1']:.3f}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _apply_overrides(load_run_config(args.config), args)
    app = create_app(args.project, cfg)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ornadetect",
        description="Detect and localize vocal ornaments in Indian Art Music.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="run-config JSON path")
        p.add_argument("--seed", type=int, help="random seed override")

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--n", type=int, required=True, help="number of clips")
    p.add_argument("--seconds", type=float, default=20.0, help="clip length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract chromagram caches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, choices=(12, 120))
    common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("chunk", help="write boundary-preserving chunk plans")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", help="label TSV directory (default: <manifest dir>/labels)")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("train", help="train the detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--bins", type=int, choices=(12, 120))
    p.add_argument("--log", help="JSON-lines training log path")
    p.add_argument("--no-dont-care", action="store_true",
                   help="ablation: relabel truncated frames with their class")
    p.add_argument("--no-periodic-pad", action="store_true",
                   help="ablation: feed the network unpadded chroma")
    p.add_argument("--no-dilation", action="store_true",
                   help="ablation: plain convolutions (all dilation rates 1)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predicted label TSVs")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--wav", nargs="+")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a prediction against a reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--collar", type=float)
    p.add_argument("--duration", type=float, help="clip length for frame scoring")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kappa", help="inter-annotator agreement of two TSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--duration", type=float)
    common(p)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("experiment", help="run a full train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels")
    p.add_argument("--split", required=True,
                   help="built-in split name (exp1..exp9) or JSON path")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--bins", type=int, choices=(12, 120))
    p.add_argument("--collar", type=float)
    p.add_argument("--no-dont-care", action="store_true")
    p.add_argument("--no-periodic-pad", action="store_true")
    p.add_argument("--no-dilation", action="store_true")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--project", required=True, help="project directory")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, LabelError, ValueError, FileNotFoundError, KeyError) as exc:
        _progress(f"error: {exc}")
        return 1
    except Exception as exc:  # runtime failure
        _progress(f"runtime failure: {type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
