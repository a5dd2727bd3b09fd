// Editable clip state. All transitions are pure: apply() returns a fresh
// event list or a rejection reason, never a half-applied edit. The model
// prediction lane is read-only by construction (nothing here writes to it).

import {
  ClassCode,
  LabelEvent,
  PredictedEvent,
  firstOverlap,
  sortEvents,
} from "./types.js";

export type EditAction =
  | { kind: "MoveOnset"; index: number; to: number }
  | { kind: "MoveOffset"; index: number; to: number }
  | { kind: "SetClass"; index: number; label: ClassCode }
  | { kind: "DeleteEvent"; index: number }
  | { kind: "CreateEvent"; event: LabelEvent }
  | { kind: "AcceptPrediction"; event: PredictedEvent };

export interface ClipView {
  clipId: string;
  duration: number;
  events: LabelEvent[];          // human lane: sorted, non-overlapping
  predictions: PredictedEvent[]; // model lane: never mutated by edits
  baseVersion: number;
  dirty: boolean;
}

export type EditOutcome =
  | { ok: true; events: LabelEvent[] }
  | { ok: false; reason: string };

const MIN_EVENT_SECONDS = 0.01;

function cloneEvents(events: LabelEvent[]): LabelEvent[] {
  return events.map((e) => ({ ...e }));
}

/** Apply one action to an event list; overlap-producing boundary moves are
 * clamped to the neighbour, impossible edits are rejected with a reason. */
export function applyEdit(
  view: ClipView,
  action: EditAction,
): EditOutcome {
  const events = cloneEvents(view.events);
  switch (action.kind) {
    case "MoveOnset": {
      const e = events[action.index];
      if (!e) return { ok: false, reason: "no such event" };
      if (action.to >= e.offset) {
        return { ok: false, reason: "onset must stay before the offset" };
      }
      const prev = events[action.index - 1];
      const lo = prev ? prev.offset : 0;
      e.onset = Math.min(Math.max(action.to, lo),
                         e.offset - MIN_EVENT_SECONDS);
      break;
    }
    case "MoveOffset": {
      const e = events[action.index];
      if (!e) return { ok: false, reason: "no such event" };
      if (action.to <= e.onset) {
        return { ok: false, reason: "offset must stay after the onset" };
      }
      const next = events[action.index + 1];
      const hi = next ? next.onset : view.duration;
      e.offset = Math.max(Math.min(action.to, hi),
                          e.onset + MIN_EVENT_SECONDS);
      break;
    }
    case "SetClass": {
      const e = events[action.index];
      if (!e) return { ok: false, reason: "no such event" };
      e.label = action.label;
      break;
    }
    case "DeleteEvent": {
      if (!events[action.index]) return { ok: false, reason: "no such event" };
      events.splice(action.index, 1);
      break;
    }
    case "CreateEvent":
    case "AcceptPrediction": {
      const e = action.event;
      if (e.offset <= e.onset) {
        return { ok: false, reason: "offset must be after the onset" };
      }
      if (e.onset < 0 || e.offset > view.duration + 1e-9) {
        return { ok: false, reason: "event lies outside the clip" };
      }
      const overlapping = events.some(
        (other) => e.onset < other.offset && other.onset < e.offset,
      );
      if (overlapping) {
        return {
          ok: false,
          reason: "overlaps an existing event; adjust or delete it first",
        };
      }
      events.push({ onset: e.onset, offset: e.offset, label: e.label });
      break;
    }
  }
  const sorted = sortEvents(events);
  if (firstOverlap(sorted) !== -1) {
    return { ok: false, reason: "edit would overlap a neighbouring event" };
  }
  return { ok: true, events: sorted };
}

/** Undo/redo wrapper: snapshots make undo(redo(a)) byte-exact. */
export class LabelEditor {
  view: ClipView;
  private undoStack: LabelEvent[][] = [];
  private redoStack: LabelEvent[][] = [];
  lastError: string | null = null;

  constructor(view: ClipView) {
    this.view = view;
  }

  apply(action: EditAction): boolean {
    const outcome = applyEdit(this.view, action);
    if (!outcome.ok) {
      this.lastError = outcome.reason;
      return false;
    }
    this.undoStack.push(cloneEvents(this.view.events));
    this.redoStack = [];
    this.view.events = outcome.events;
    this.view.dirty = true;
    this.lastError = null;
    return true;
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(cloneEvents(this.view.events));
    this.view.events = prev;
    this.view.dirty = true;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(cloneEvents(this.view.events));
    this.view.events = next;
    this.view.dirty = true;
    return true;
  }

  /** Mark the current state as saved under the given server version. */
  markSynced(version: number): void {
    this.view.baseVersion = version;
    this.view.dirty = false;
  }
}
