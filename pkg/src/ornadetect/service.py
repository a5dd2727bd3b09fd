"""HTTP backend for the human-in-the-loop annotation workflow: serves audio,
features, pitch contours, versioned labels, and model predictions; persists
annotator edits append-only; runs fine-tune jobs in the background so
refreshed predictions feed the next annotation pass."""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from . import dsp
from .config import RunConfig
from .core import (
    CLASS_CODES,
    DurationRules,
    Event,
    LabelError,
    LabelTrack,
    class_from_string,
    load_manifest,
    parse_label_track,
    read_wav,
    validate_events,
    write_label_track,
)
from .model import load_checkpoint, save_checkpoint, fine_tune, TrainConfig
from .pipeline import FeaturePlan, build_training_chunks, predict_signal


def _event_json(e: Event) -> dict:
    return {"onset": e.onset, "offset": e.offset, "label": CLASS_CODES[e.label]}


class Project:
    """Directory-backed annotation project.

    Layout: ``manifest.json``, ``audio/``, ``labels/<clip>/vNNNNN.tsv`` (+
    sidecar meta JSON), ``checkpoints/*.ckpt``, ``jobs/*.json``. Flat
    ``labels/<clip>.tsv`` files (the dataset layout) are imported as version 1
    on first access.
    """

    def __init__(self, root: str | Path, cfg: RunConfig | None = None):
        self.root = Path(root)
        self.cfg = cfg or RunConfig()
        self.manifest = load_manifest(self.root / "manifest.json")
        self.labels_dir = self.root / "labels"
        self.ckpt_dir = self.root / "checkpoints"
        self.jobs_dir = self.root / "jobs"
        self.pred_dir = self.root / "predictions"
        for d in (self.labels_dir, self.ckpt_dir, self.jobs_dir, self.pred_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._clip_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._job_guard = threading.Lock()
        self._jobs: dict[str, dict] = {}
        for f in self.jobs_dir.glob("*.json"):
            job = json.loads(f.read_text())
            if job.get("state") == "running":  # orphaned by a crash
                job["state"] = "failed"
                job["error"] = "interrupted"
            self._jobs[job["id"]] = job

    # -- clips ---------------------------------------------------------

    def clip_ids(self) -> list[str]:
        return [c.clip_id for c in self.manifest]

    def require_clip(self, clip_id: str):
        try:
            return self.manifest.get(clip_id)
        except KeyError:
            raise HTTPException(404, f"unknown clip {clip_id!r}")

    def clip_lock(self, clip_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._clip_locks.setdefault(clip_id, threading.Lock())

    def load_audio(self, clip_id: str) -> tuple[np.ndarray, int]:
        return read_wav(self.manifest.wav_path(clip_id))

    # -- label versions -------------------------------------------------

    def _version_dir(self, clip_id: str) -> Path:
        d = self.labels_dir / clip_id
        if not d.exists():
            d.mkdir(parents=True)
            flat = self.labels_dir / f"{clip_id}.tsv"
            if flat.exists():
                (d / "v00001.tsv").write_text(flat.read_text())
                (d / "v00001.meta.json").write_text(json.dumps(
                    {"author": "import", "timestamp": time.time()}
                ))
        return d

    def current_version(self, clip_id: str) -> int:
        d = self._version_dir(clip_id)
        versions = sorted(d.glob("v*.tsv"))
        return int(versions[-1].stem[1:]) if versions else 0

    def load_labels(self, clip_id: str) -> tuple[LabelTrack, int]:
        d = self._version_dir(clip_id)
        v = self.current_version(clip_id)
        if v == 0:
            return LabelTrack(clip_id, ()), 0
        text = (d / f"v{v:05d}.tsv").read_text()
        return parse_label_track(text, clip_id), v

    def store_labels(self, clip_id: str, track: LabelTrack, author: str) -> int:
        d = self._version_dir(clip_id)
        v = self.current_version(clip_id) + 1
        (d / f"v{v:05d}.tsv").write_text(write_label_track(track))
        (d / f"v{v:05d}.meta.json").write_text(json.dumps(
            {"author": author, "timestamp": time.time()}
        ))
        return v

    # -- checkpoints ------------------------------------------------------

    def checkpoint_ids(self) -> list[str]:
        return sorted(p.stem for p in self.ckpt_dir.glob("*.ckpt"))

    def active_checkpoint_id(self) -> str | None:
        marker = self.root / "active_checkpoint.txt"
        if marker.exists():
            cid = marker.read_text().strip()
            if (self.ckpt_dir / f"{cid}.ckpt").exists():
                return cid
        ids = self.checkpoint_ids()
        return ids[-1] if ids else None

    def set_active_checkpoint(self, ckpt_id: str) -> None:
        (self.root / "active_checkpoint.txt").write_text(ckpt_id + "\n")

    def load_ckpt(self, ckpt_id: str):
        path = self.ckpt_dir / f"{ckpt_id}.ckpt"
        if not path.exists():
            raise HTTPException(404, f"unknown checkpoint {ckpt_id!r}")
        return load_checkpoint(path)

    # -- predictions -----------------------------------------------------

    def predictions(self, clip_id: str, ckpt_id: str) -> dict:
        cache = self.pred_dir / ckpt_id / f"{clip_id}.json"
        if cache.exists():
            return json.loads(cache.read_text())
        ckpt = self.load_ckpt(ckpt_id)
        signal, _ = self.load_audio(clip_id)
        plan = FeaturePlan(
            self.cfg.stft,
            replace(self.cfg.chroma, bins=ckpt.config.input_bins),
            self.cfg.chunk_seconds,
        )
        pred = predict_signal(ckpt, signal, plan, self.cfg.decode, clip_id)
        doc = {
            "checkpoint": ckpt_id,
            "events": [
                {**_event_json(e), "confidence": round(c, 5)}
                for e, c in zip(pred.track.events, pred.confidences)
            ],
        }
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps(doc))
        return doc

    # -- jobs --------------------------------------------------------------

    def job_running(self) -> bool:
        return any(j["state"] in ("queued", "running")
                   for j in self._jobs.values())

    def _write_job(self, job: dict) -> None:
        (self.jobs_dir / f"{job['id']}.json").write_text(json.dumps(job))

    def submit_fine_tune(self, epochs: int | None) -> dict:
        with self._job_guard:
            if self.job_running():
                raise HTTPException(503, "a training job is already running")
            base = self.active_checkpoint_id()
            if base is None:
                raise HTTPException(
                    409, "no checkpoint available to fine-tune from"
                )
            job = {
                "id": uuid.uuid4().hex[:12],
                "kind": "fine_tune",
                "state": "queued",
                "progress": 0.0,
                "result_checkpoint": None,
                "base_checkpoint": base,
            }
            self._jobs[job["id"]] = job
            self._write_job(job)
        worker = threading.Thread(
            target=self._run_fine_tune, args=(job["id"], base, epochs),
            daemon=True,
        )
        worker.start()
        return job

    def _run_fine_tune(self, job_id: str, base: str, epochs: int | None) -> None:
        job = self._jobs[job_id]
        job["state"] = "running"
        self._write_job(job)
        try:
            ckpt = self.load_ckpt(base)
            plan = FeaturePlan(
                self.cfg.stft,
                replace(self.cfg.chroma, bins=ckpt.config.input_bins),
                self.cfg.chunk_seconds,
            )
            dataset = []
            ids = self.clip_ids()
            for i, cid in enumerate(ids):
                signal, _ = self.load_audio(cid)
                track, _ = self.load_labels(cid)
                dataset.extend(
                    build_training_chunks(signal, track, plan, ckpt.config)
                )
                job["progress"] = 0.5 * (i + 1) / len(ids)
                self._write_job(job)
            tcfg = replace(
                self.cfg.train,
                epochs=epochs if epochs is not None else self.cfg.train.epochs,
            )
            tuned = fine_tune(ckpt, dataset, tcfg)
            new_id = f"{base}-ft{int(time.time())}"
            save_checkpoint(tuned, self.ckpt_dir / f"{new_id}.ckpt")
            self.set_active_checkpoint(new_id)
            job["result_checkpoint"] = new_id
            job["progress"] = 1.0
            job["state"] = "done"
        except Exception as exc:  # job failures are reported, not raised
            job["state"] = "failed"
            job["error"] = f"{type(exc).__name__}: {exc}"
        self._write_job(job)


def _parse_events(raw_events: list) -> tuple[LabelTrack, list[dict]]:
    """Build an (unchecked) track from request events; structural problems
    that cannot be represented at all raise LabelError."""
    events = []
    for i, ev in enumerate(raw_events):
        try:
            onset = float(ev["onset"])
            offset = float(ev["offset"])
            label = class_from_string(str(ev["label"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise LabelError(f"event {i}: {exc}")
        if offset <= onset:
            raise LabelError(f"event {i}: offset must be greater than onset")
        if onset < 0:
            raise LabelError(f"event {i}: negative onset")
        events.append(Event(onset, offset, label))
    return LabelTrack("", tuple(events), unchecked=True), []


def create_app(project_dir: str | Path, cfg: RunConfig | None = None) -> FastAPI:
    project = Project(project_dir, cfg)
    app = FastAPI(title="ornadetect annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.project = project
    rules = DurationRules()

    @app.get("/api/clips")
    def list_clips():
        out = []
        for entry in project.manifest:
            track, version = project.load_labels(entry.clip_id)
            signal, sr = project.load_audio(entry.clip_id)
            out.append({
                "clip_id": entry.clip_id,
                "singer": entry.singer,
                "raga": entry.raga,
                "duration": len(signal) / sr,
                "n_events": len(track.events),
                "label_version": version,
            })
        return {"clips": out, "active_checkpoint": project.active_checkpoint_id()}

    @app.get("/api/clips/{clip_id}/audio")
    def get_audio(clip_id: str):
        project.require_clip(clip_id)
        data = project.manifest.wav_path(clip_id).read_bytes()
        return Response(content=data, media_type="audio/wav")

    @app.get("/api/clips/{clip_id}/features")
    def get_features(
        clip_id: str,
        kind: str = Query("chroma", pattern="^(chroma|pitch)$"),
        bins: int | None = None,
    ):
        project.require_clip(clip_id)
        signal, sr = project.load_audio(clip_id)
        stft_cfg = project.cfg.stft
        if sr != stft_cfg.sample_rate:
            stft_cfg = dsp.StftConfig.for_sample_rate(sr)
        if kind == "pitch":
            pt = dsp.pitch_track(signal, stft_cfg)
            return {
                "hop_seconds": pt.frame_hop_seconds,
                "data": np.round(pt.f0_hz, 2).tolist(),
            }
        chroma_cfg = project.cfg.chroma
        if bins is not None:
            chroma_cfg = replace(chroma_cfg, bins=bins)
        fm = dsp.chromagram(signal, stft_cfg, chroma_cfg, clip_id)
        return {
            "hop_seconds": fm.frame_hop_seconds,
            "bins": fm.bins,
            "data": np.round(fm.values, 5).tolist(),
        }

    @app.get("/api/clips/{clip_id}/labels")
    def get_labels(clip_id: str):
        project.require_clip(clip_id)
        track, version = project.load_labels(clip_id)
        return {
            "clip_id": clip_id,
            "version": version,
            "events": [_event_json(e) for e in track.events],
        }

    @app.put("/api/clips/{clip_id}/labels")
    def put_labels(clip_id: str, body: dict = Body(...), force: bool = False):
        project.require_clip(clip_id)
        if "base_version" not in body or "events" not in body:
            raise HTTPException(422, "body needs base_version and events")
        try:
            track, _ = _parse_events(body["events"])
        except LabelError as exc:
            raise HTTPException(422, detail={"violations": [str(exc)]})
        track = track.with_clip_id(clip_id)
        violations = validate_events(track, rules)
        overlaps = [v for v in violations if v.kind == "Overlap"]
        if overlaps:
            # overlapping events cannot be stored at all (the label format
            # and the training pipeline both assume non-overlap)
            raise HTTPException(422, detail={
                "violations": [v.describe() for v in overlaps],
                "forceable": False,
            })
        if violations and not force:
            raise HTTPException(422, detail={
                "violations": [v.describe() for v in violations],
                "forceable": True,
            })
        with project.clip_lock(clip_id):
            current = project.current_version(clip_id)
            if int(body["base_version"]) != current:
                raise HTTPException(409, detail={
                    "message": "label track changed since you loaded it",
                    "current_version": current,
                })
            strict = LabelTrack(clip_id, track.events)
            version = project.store_labels(
                clip_id, strict, str(body.get("author", "anonymous"))
            )
        return {"version": version}

    @app.get("/api/clips/{clip_id}/predictions")
    def get_predictions(clip_id: str, checkpoint: str | None = None):
        project.require_clip(clip_id)
        ckpt_id = checkpoint or project.active_checkpoint_id()
        if ckpt_id is None:
            raise HTTPException(404, "no checkpoint available")
        return project.predictions(clip_id, ckpt_id)

    @app.post("/api/jobs/fine_tune")
    def post_fine_tune(body: dict = Body(default={})):
        epochs = body.get("epochs")
        job = project.submit_fine_tune(epochs)
        return {"id": job["id"], "state": job["state"]}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = project._jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job

    return app
