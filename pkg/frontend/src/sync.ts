// Save flow with optimistic concurrency and crash-safe drafts: every edit is
// mirrored to storage until the server confirms a version, so a browser crash
// or network failure loses nothing.

import { AnnotationApi, SaveResult } from "./api.js";
import { LabelEditor } from "./state.js";
import { LabelEvent } from "./types.js";

export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

interface Draft {
  baseVersion: number;
  events: LabelEvent[];
}

const draftKey = (clipId: string) => `ornadetect-draft:${clipId}`;

export function saveDraft(store: DraftStore, editor: LabelEditor): void {
  store.setItem(
    draftKey(editor.view.clipId),
    JSON.stringify({
      baseVersion: editor.view.baseVersion,
      events: editor.view.events,
    }),
  );
}

export function loadDraft(store: DraftStore, clipId: string): Draft | null {
  const raw = store.getItem(draftKey(clipId));
  return raw ? (JSON.parse(raw) as Draft) : null;
}

export function clearDraft(store: DraftStore, clipId: string): void {
  store.removeItem(draftKey(clipId));
}

export type SyncOutcome =
  | { status: "saved"; version: number }
  | { status: "conflict"; currentVersion: number }
  | { status: "violations"; violations: string[]; forceable: boolean }
  | { status: "offline"; message: string }
  | { status: "clean" };

/** Push the editor's events to the server. On success the dirty flag clears
 * and the draft is dropped; every failure path keeps the draft intact. */
export async function sync(
  editor: LabelEditor,
  api: AnnotationApi,
  store: DraftStore,
  opts: { force?: boolean } = {},
): Promise<SyncOutcome> {
  if (!editor.view.dirty) return { status: "clean" };
  saveDraft(store, editor);
  const result: SaveResult = await api.saveLabels(
    editor.view.clipId,
    editor.view.events,
    editor.view.baseVersion,
    { force: opts.force },
  );
  switch (result.status) {
    case "ok":
      editor.markSynced(result.version);
      clearDraft(store, editor.view.clipId);
      return { status: "saved", version: result.version };
    case "conflict":
      return { status: "conflict", currentVersion: result.currentVersion };
    case "violations":
      return {
        status: "violations",
        violations: result.violations,
        forceable: result.forceable,
      };
    case "network-error":
      return { status: "offline", message: result.message };
  }
}
