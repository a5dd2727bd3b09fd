// End-to-end round trip against the real annotation service: a scripted edit
// session (delete, accept-prediction, create, move, save) must leave a server
// label file that parses back to exactly the editor's event list, and the 409
// and 422 flows must behave as the UI expects.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { LabelEditor } from "../src/state.js";
import { sync } from "../src/sync.js";
import { LabelEvent } from "../src/types.js";

const PORT = 8731 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

const RUN_CONFIG = {
  chroma: { bins: 12 },
  model: {
    encoder_filters: [4, 8],
    decoder_filters: [8, 4],
    encoder_dilations: [1, 2],
    decoder_dilations: [2, 1],
    dropout: 0.0,
  },
  train: { epochs: 2, batch_size: 4, seed: 0 },
  chunking: { t: 6.0 },
};

let server: ChildProcess | null = null;
let projectDir = "";

function cli(args: string[]): void {
  const result = spawnSync("python3", ["-m", "ornadetect.cli", ...args], {
    encoding: "utf-8",
  });
  if (result.status !== 0) {
    throw new Error(`cli ${args[0]} failed: ${result.stderr}`);
  }
}

async function waitForServer(timeoutMs = 60000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/api/clips`);
      if (r.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error("service did not come up");
}

const memoryStore = () => {
  const map = new Map<string, string>();
  return {
    getItem: (k: string) => map.get(k) ?? null,
    setItem: (k: string, v: string) => void map.set(k, v),
    removeItem: (k: string) => void map.delete(k),
  };
};

beforeAll(async () => {
  projectDir = mkdtempSync(join(tmpdir(), "ornadetect-ui-"));
  cli(["synth", "--n", "2", "--seconds", "6", "--seed", "41",
       "--out", projectDir]);
  const cfgPath = join(projectDir, "run-config.json");
  writeFileSync(cfgPath, JSON.stringify(RUN_CONFIG));
  cli(["train", "--manifest", join(projectDir, "manifest.json"),
       "--out", join(projectDir, "checkpoints", "base.ckpt"),
       "--config", cfgPath, "--epochs", "25"]);
  server = spawn("python3", [
    "-m", "ornadetect.cli", "serve",
    "--project", projectDir,
    "--port", String(PORT),
    "--config", cfgPath,
  ], { stdio: "ignore" });
  await waitForServer();
}, 120000);

afterAll(() => {
  server?.kill();
});

async function freshEditor(api: AnnotationApi, clipId: string,
                           duration = 6): Promise<LabelEditor> {
  const labels = await api.getLabels(clipId);
  return new LabelEditor({
    clipId,
    duration,
    events: labels.events,
    predictions: [],
    baseVersion: labels.version,
    dirty: false,
  });
}

function findGap(events: LabelEvent[], span: number, duration: number): number {
  let cursor = 0.05;
  for (const e of [...events].sort((a, b) => a.onset - b.onset)) {
    if (e.onset - cursor >= span + 0.02) return cursor;
    cursor = Math.max(cursor, e.offset + 0.01);
  }
  if (duration - cursor >= span + 0.02) return cursor;
  throw new Error("no free gap in the clip");
}

describe("UI <-> service round trip", () => {
  const api = new AnnotationApi(BASE, (url, init) => fetch(url, init));

  it("an edit session saves to a server file equal to the UI list", async () => {
    const editor = await freshEditor(api, "synth000");
    const store = memoryStore();

    // delete everything, then rebuild the track from scratch
    while (editor.view.events.length > 0) {
      expect(editor.apply({ kind: "DeleteEvent", index: 0 })).toBe(true);
    }

    // accept a model prediction into the empty lane when one exists
    const preds = await api.getPredictions("synth000");
    if (preds.events.length > 0) {
      expect(editor.apply({
        kind: "AcceptPrediction",
        event: preds.events[0],
      })).toBe(true);
    }

    // create an event in free space, then adjust its boundaries
    const onset = findGap(editor.view.events, 0.3, editor.view.duration);
    expect(editor.apply({
      kind: "CreateEvent",
      event: { onset, offset: onset + 0.3, label: "G" },
    })).toBe(true);
    const idx = editor.view.events.findIndex(
      (e) => Math.abs(e.onset - onset) < 1e-9);
    expect(editor.apply({
      kind: "MoveOffset", index: idx, to: onset + 0.42,
    })).toBe(true);
    expect(editor.apply({
      kind: "MoveOnset", index: idx, to: onset + 0.02,
    })).toBe(true);

    const outcome = await sync(editor, api, store);
    expect(outcome.status).toBe("saved");

    const onServer = await api.getLabels("synth000");
    expect(onServer.version).toBe(editor.view.baseVersion);
    expect(onServer.events).toHaveLength(editor.view.events.length);
    onServer.events.forEach((e, i) => {
      const mine = editor.view.events[i];
      expect(e.label).toBe(mine.label);
      // the server stores 6-decimal seconds
      expect(Math.abs(e.onset - mine.onset)).toBeLessThan(1e-6);
      expect(Math.abs(e.offset - mine.offset)).toBeLessThan(1e-6);
    });
  }, 60000);

  it("stale base_version takes the 409 path", async () => {
    const store = memoryStore();
    const winner = await freshEditor(api, "synth001");
    const loser = await freshEditor(api, "synth001");

    winner.apply({ kind: "CreateEvent",
                   event: { onset: findGap(winner.view.events, 0.2, 6),
                            offset: findGap(winner.view.events, 0.2, 6) + 0.2,
                            label: "H" } });
    // Nyas of 0.2 s violates the rules; force it through (rules are advisory)
    const first = await sync(winner, api, store, { force: true });
    expect(first.status).toBe("saved");

    loser.apply({ kind: "DeleteEvent", index: 0 });
    const conflicted = await sync(loser, api, store);
    expect(conflicted.status).toBe("conflict");
    if (conflicted.status === "conflict") {
      expect(conflicted.currentVersion).toBe(winner.view.baseVersion);
    }
  }, 60000);

  it("rule violations take the 422 path and force-save succeeds", async () => {
    const store = memoryStore();
    const editor = await freshEditor(api, "synth001");
    const onset = findGap(editor.view.events, 0.5, 6);
    expect(editor.apply({
      kind: "CreateEvent",
      event: { onset, offset: onset + 0.5, label: "K" },  // Kan over 0.35 s
    })).toBe(true);

    const rejected = await sync(editor, api, store);
    expect(rejected.status).toBe("violations");
    if (rejected.status === "violations") {
      expect(rejected.forceable).toBe(true);
      expect(rejected.violations.join(" ")).toMatch(/maximum/);
    }

    const forced = await sync(editor, api, store, { force: true });
    expect(forced.status).toBe("saved");
    const onServer = await api.getLabels("synth001");
    expect(onServer.events.some(
      (e) => e.label === "K" && Math.abs(e.offset - e.onset - 0.5) < 1e-6,
    )).toBe(true);
  }, 60000);

  it("prediction overlay data equals the service's decoded track", async () => {
    const { layoutEvents } = await import("../src/render.js");
    const preds = await api.getPredictions("synth000");
    const viewport = { start: 0, end: 6, widthPx: 1200 };
    const boxes = layoutEvents(preds.events, viewport);
    expect(boxes).toHaveLength(preds.events.length);
    preds.events.forEach((e, i) => {
      expect(boxes[i].label).toBe(e.label);
      const exactX = (e.onset / 6) * 1200;
      expect(Math.abs(boxes[i].x - exactX)).toBeLessThanOrEqual(1);
    });
  }, 60000);
});
