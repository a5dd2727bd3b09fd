// DOM wiring for the annotation tool: clip browser, chroma + pitch display,
// two label lanes (editable human lane, read-only model overlay), playback,
// keyboard editing, save/conflict/violation flows, and retrain trigger.

import { AnnotationApi } from "./api.js";
import { drawChroma, drawLane, drawPitch, layoutEvents } from "./render.js";
import { EditAction, LabelEditor } from "./state.js";
import { clearDraft, loadDraft, saveDraft, sync } from "./sync.js";
import { Viewport, clampViewport, pixelToTime, secondsPerPixel, timeToPixel, zoomAround } from "./timemap.js";
import { CLASS_KEYS, FRAME_HOP_SECONDS, LabelEvent, PredictedEvent, isClassCode } from "./types.js";

const api = new AnnotationApi("");

interface Elements {
  clipList: HTMLElement;
  chroma: HTMLCanvasElement;
  pitch: HTMLCanvasElement;
  humanLane: HTMLCanvasElement;
  modelLane: HTMLCanvasElement;
  status: HTMLElement;
  banner: HTMLElement;
  audio: HTMLAudioElement;
  saveBtn: HTMLButtonElement;
  retrainBtn: HTMLButtonElement;
  undoBtn: HTMLButtonElement;
  redoBtn: HTMLButtonElement;
  clipTitle: HTMLElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

type DragMode =
  | { kind: "onset"; index: number }
  | { kind: "offset"; index: number }
  | { kind: "create"; anchor: number }
  | null;

class App {
  els: Elements;
  editor: LabelEditor | null = null;
  predictions: PredictedEvent[] = [];
  chromaDoc: { hop_seconds: number; data: number[][] } | null = null;
  pitchDoc: { hop_seconds: number; data: number[] } | null = null;
  viewport: Viewport = { start: 0, end: 10, widthPx: 1000 };
  selected = -1;
  drag: DragMode = null;
  raf = 0;

  constructor(els: Elements) {
    this.els = els;
    this.bindEvents();
  }

  get duration(): number {
    return this.editor?.view.duration ?? 10;
  }

  setStatus(text: string): void {
    this.els.status.textContent = text;
  }

  showBanner(text: string, actions: { label: string; onClick: () => void }[] = []): void {
    this.els.banner.innerHTML = "";
    this.els.banner.appendChild(document.createTextNode(text));
    for (const a of actions) {
      const btn = document.createElement("button");
      btn.textContent = a.label;
      btn.addEventListener("click", () => {
        this.els.banner.hidden = true;
        a.onClick();
      });
      this.els.banner.appendChild(btn);
    }
    this.els.banner.hidden = false;
  }

  hideBanner(): void {
    this.els.banner.hidden = true;
  }

  async loadClipList(): Promise<void> {
    const doc = await api.listClips();
    this.els.clipList.innerHTML = "";
    for (const clip of doc.clips) {
      const item = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent =
        `${clip.clip_id} — ${clip.singer}/${clip.raga} ` +
        `(${clip.n_events} events, v${clip.label_version})`;
      btn.addEventListener("click", () => void this.openClip(clip.clip_id, clip.duration));
      item.appendChild(btn);
      this.els.clipList.appendChild(item);
    }
  }

  async openClip(clipId: string, duration: number): Promise<void> {
    this.setStatus(`loading ${clipId}…`);
    const [labels, chroma, pitch] = await Promise.all([
      api.getLabels(clipId),
      api.getChroma(clipId),
      api.getPitch(clipId),
    ]);
    let events = labels.events;
    const draft = loadDraft(localStorage, clipId);
    if (draft && draft.baseVersion === labels.version) {
      events = draft.events; // crash recovery: unsaved edits survive reloads
      this.setStatus("restored unsaved draft");
    } else {
      clearDraft(localStorage, clipId);
    }
    this.editor = new LabelEditor({
      clipId,
      duration,
      events,
      predictions: [],
      baseVersion: labels.version,
      dirty: draft !== null && draft.baseVersion === labels.version,
    });
    this.chromaDoc = chroma as { hop_seconds: number; data: number[][] };
    this.pitchDoc = pitch as { hop_seconds: number; data: number[] };
    this.viewport = { start: 0, end: Math.min(duration, 12), widthPx: this.canvasWidth() };
    this.selected = -1;
    this.els.clipTitle.textContent = clipId;
    this.els.audio.src = api.audioUrl(clipId);
    try {
      const preds = await api.getPredictions(clipId);
      this.predictions = preds.events;
      if (this.editor) this.editor.view.predictions = preds.events;
    } catch {
      this.predictions = [];
    }
    this.setStatus(`${clipId}: v${labels.version}, ${events.length} events`);
    this.redraw();
  }

  canvasWidth(): number {
    return this.els.chroma.clientWidth || 1000;
  }

  redraw(): void {
    cancelAnimationFrame(this.raf);
    this.raf = requestAnimationFrame(() => this.paint());
  }

  paint(): void {
    const width = this.canvasWidth();
    for (const canvas of [this.els.chroma, this.els.pitch, this.els.humanLane,
                          this.els.modelLane]) {
      canvas.width = width;
    }
    this.viewport = { ...this.viewport, widthPx: width };
    if (this.chromaDoc) {
      drawChroma(this.els.chroma, this.chromaDoc.data, this.viewport,
                 this.chromaDoc.hop_seconds);
    }
    if (this.pitchDoc) {
      drawPitch(this.els.pitch, this.pitchDoc.data, this.viewport,
                this.pitchDoc.hop_seconds);
    }
    if (this.editor) {
      drawLane(this.els.humanLane,
               layoutEvents(this.editor.view.events, this.viewport),
               { editable: true, selected: this.selected });
      drawLane(this.els.modelLane,
               layoutEvents(this.predictions, this.viewport),
               { editable: false });
      this.els.saveBtn.disabled = !this.editor.view.dirty;
      this.drawPlayhead();
    }
  }

  drawPlayhead(): void {
    const t = this.els.audio.currentTime;
    if (t < this.viewport.start || t > this.viewport.end) return;
    const x = timeToPixel(this.viewport, t);
    for (const canvas of [this.els.chroma, this.els.pitch]) {
      const ctx = canvas.getContext("2d");
      if (!ctx) continue;
      ctx.strokeStyle = "#ff5050";
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, canvas.height);
      ctx.stroke();
    }
  }

  act(action: EditAction): void {
    if (!this.editor) return;
    if (!this.editor.apply(action)) {
      this.setStatus(`rejected: ${this.editor.lastError}`);
      return;
    }
    saveDraft(localStorage, this.editor);
    this.setStatus("edited (unsaved)");
    this.redraw();
  }

  hitEvent(x: number): { index: number; edge: "onset" | "offset" | null } {
    if (!this.editor) return { index: -1, edge: null };
    const boxes = layoutEvents(this.editor.view.events, this.viewport);
    for (const box of boxes) {
      if (Math.abs(x - box.x) < 5) return { index: box.index, edge: "onset" };
      if (Math.abs(x - (box.x + box.width)) < 5) {
        return { index: box.index, edge: "offset" };
      }
      if (x > box.x && x < box.x + box.width) {
        return { index: box.index, edge: null };
      }
    }
    return { index: -1, edge: null };
  }

  bindEvents(): void {
    const lane = this.els.humanLane;
    lane.addEventListener("mousedown", (ev) => {
      if (!this.editor) return;
      const x = ev.offsetX;
      const hit = this.hitEvent(x);
      if (hit.edge === "onset") this.drag = { kind: "onset", index: hit.index };
      else if (hit.edge === "offset") this.drag = { kind: "offset", index: hit.index };
      else if (hit.index >= 0) {
        this.selected = hit.index;
        this.redraw();
      } else {
        this.drag = { kind: "create", anchor: pixelToTime(this.viewport, x) };
      }
    });
    lane.addEventListener("mousemove", (ev) => {
      if (!this.drag || !this.editor) return;
      const t = pixelToTime(this.viewport, ev.offsetX);
      if (this.drag.kind === "onset") {
        this.act({ kind: "MoveOnset", index: this.drag.index, to: t });
        this.selected = this.drag.index;
      } else if (this.drag.kind === "offset") {
        this.act({ kind: "MoveOffset", index: this.drag.index, to: t });
        this.selected = this.drag.index;
      }
    });
    const endDrag = (ev: MouseEvent) => {
      if (this.drag?.kind === "create" && this.editor) {
        const t = pixelToTime(this.viewport, ev.offsetX);
        const [a, b] = [this.drag.anchor, t].sort((p, q) => p - q);
        if (b - a > 0.02) {
          this.act({ kind: "CreateEvent",
                     event: { onset: a, offset: b, label: "K" } });
          this.selected = this.editor.view.events.findIndex(
            (e) => Math.abs(e.onset - a) < 1e-9);
        }
      }
      this.drag = null;
    };
    lane.addEventListener("mouseup", endDrag);
    lane.addEventListener("mouseleave", () => (this.drag = null));

    // clicking a model event copies it into the human lane
    this.els.modelLane.addEventListener("click", (ev) => {
      if (!this.editor) return;
      const boxes = layoutEvents(this.predictions, this.viewport);
      const hit = boxes.find((b) => ev.offsetX >= b.x && ev.offsetX <= b.x + b.width);
      if (hit) {
        this.act({ kind: "AcceptPrediction", event: this.predictions[hit.index] });
      }
    });

    for (const canvas of [this.els.chroma, this.els.pitch]) {
      canvas.addEventListener("click", (ev) => {
        this.els.audio.currentTime = pixelToTime(this.viewport, ev.offsetX);
        this.redraw();
      });
      canvas.addEventListener("wheel", (ev) => {
        ev.preventDefault();
        const t = pixelToTime(this.viewport, ev.offsetX);
        const factor = ev.deltaY > 0 ? 1.25 : 0.8;
        this.viewport = zoomAround(this.viewport, t, factor, this.duration);
        this.redraw();
      });
    }

    document.addEventListener("keydown", (ev) => {
      if (!this.editor) return;
      const key = ev.key.toLowerCase();
      if (isClassKey(key) && this.selected >= 0) {
        this.act({ kind: "SetClass", index: this.selected,
                   label: CLASS_KEYS[key] });
      } else if (ev.key === "Delete" || ev.key === "Backspace") {
        if (this.selected >= 0) {
          this.act({ kind: "DeleteEvent", index: this.selected });
          this.selected = -1;
        }
      } else if (ev.key === "ArrowLeft" || ev.key === "ArrowRight") {
        if (this.selected >= 0) {
          const nudge = (ev.key === "ArrowLeft" ? -1 : 1) * FRAME_HOP_SECONDS;
          const e = this.editor.view.events[this.selected];
          const action: EditAction = ev.shiftKey
            ? { kind: "MoveOffset", index: this.selected, to: e.offset + nudge }
            : { kind: "MoveOnset", index: this.selected, to: e.onset + nudge };
          this.act(action);
          ev.preventDefault();
        }
      } else if (key === "z" && (ev.ctrlKey || ev.metaKey)) {
        if (ev.shiftKey) this.editor.redo();
        else this.editor.undo();
        if (this.editor) saveDraft(localStorage, this.editor);
        this.redraw();
        ev.preventDefault();
      } else if (ev.key === " ") {
        if (this.els.audio.paused) void this.els.audio.play();
        else this.els.audio.pause();
        ev.preventDefault();
      }
    });

    this.els.audio.addEventListener("timeupdate", () => this.redraw());

    this.els.saveBtn.addEventListener("click", () => void this.save(false));
    this.els.undoBtn.addEventListener("click", () => {
      this.editor?.undo();
      if (this.editor) saveDraft(localStorage, this.editor);
      this.redraw();
    });
    this.els.redoBtn.addEventListener("click", () => {
      this.editor?.redo();
      if (this.editor) saveDraft(localStorage, this.editor);
      this.redraw();
    });
    this.els.retrainBtn.addEventListener("click", () => void this.retrain());
    window.addEventListener("resize", () => this.redraw());
  }

  async save(force: boolean): Promise<void> {
    if (!this.editor) return;
    const outcome = await sync(this.editor, api, localStorage, { force });
    switch (outcome.status) {
      case "clean":
      case "saved":
        this.hideBanner();
        this.setStatus(
          outcome.status === "saved"
            ? `saved as v${outcome.version}`
            : "nothing to save",
        );
        break;
      case "conflict":
        this.showBanner(
          `Someone saved v${outcome.currentVersion} while you edited. ` +
            `Reload their version? Your edits stay in the local draft.`,
          [{
            label: "Reload",
            onClick: () => {
              const id = this.editor!.view.clipId;
              clearDraft(localStorage, id);
              void this.openClip(id, this.duration);
            },
          }],
        );
        break;
      case "violations":
        this.showBanner(
          `Annotation rules: ${outcome.violations.join("; ")}`,
          outcome.forceable
            ? [{ label: "Save anyway", onClick: () => void this.save(true) }]
            : [],
        );
        break;
      case "offline":
        this.showBanner(
          `Could not reach the server (${outcome.message}); edits are kept locally.`,
          [{ label: "Retry", onClick: () => void this.save(force) }],
        );
        break;
    }
    this.redraw();
  }

  async retrain(): Promise<void> {
    const job = await api.startFineTune();
    if (!job) {
      this.setStatus("a training job is already running");
      return;
    }
    this.setStatus(`fine-tune ${job.id} started…`);
    const poll = async (): Promise<void> => {
      const doc = await api.jobStatus(job.id);
      if (doc.state === "done") {
        this.setStatus(`fine-tune done: checkpoint ${doc.result_checkpoint}`);
        if (this.editor) {
          const preds = await api.getPredictions(this.editor.view.clipId);
          this.predictions = preds.events;
          this.editor.view.predictions = preds.events;
          this.redraw();
        }
      } else if (doc.state === "failed") {
        this.setStatus("fine-tune failed; see server logs");
      } else {
        this.setStatus(`fine-tune ${doc.state} ${(doc.progress * 100).toFixed(0)}%`);
        setTimeout(() => void poll(), 1500);
      }
    };
    void poll();
  }
}

function isClassKey(key: string): key is keyof typeof CLASS_KEYS {
  return key in CLASS_KEYS;
}

export function start(): void {
  const app = new App({
    clipList: el("clip-list"),
    chroma: el("chroma-canvas"),
    pitch: el("pitch-canvas"),
    humanLane: el("human-lane"),
    modelLane: el("model-lane"),
    status: el("status"),
    banner: el("banner"),
    audio: el("audio"),
    saveBtn: el("save-btn"),
    retrainBtn: el("retrain-btn"),
    undoBtn: el("undo-btn"),
    redoBtn: el("redo-btn"),
    clipTitle: el("clip-title"),
  });
  void app.loadClipList();
}

if (typeof document !== "undefined" && document.getElementById("clip-list")) {
  start();
}
