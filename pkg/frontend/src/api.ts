// Typed client for the annotation service; the only way the UI touches data.

import { ClassCode, LabelEvent, PredictedEvent } from "./types.js";

export interface ClipSummary {
  clip_id: string;
  singer: string;
  raga: string;
  duration: number;
  n_events: number;
  label_version: number;
}

export interface LabelsDoc {
  version: number;
  events: LabelEvent[];
}

export interface PredictionsDoc {
  checkpoint: string;
  events: PredictedEvent[];
}

export interface FeaturesDoc {
  hop_seconds: number;
  bins?: number;
  data: number[][] | number[];
}

export type SaveResult =
  | { status: "ok"; version: number }
  | { status: "conflict"; currentVersion: number }
  | { status: "violations"; violations: string[]; forceable: boolean }
  | { status: "network-error"; message: string };

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class AnnotationApi {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const r = await this.fetchFn(`${this.base}${path}`);
    if (!r.ok) throw new Error(`${path}: HTTP ${r.status}`);
    return (await r.json()) as T;
  }

  listClips(): Promise<{ clips: ClipSummary[]; active_checkpoint: string | null }> {
    return this.getJson("/api/clips");
  }

  getLabels(clipId: string): Promise<LabelsDoc> {
    return this.getJson(`/api/clips/${clipId}/labels`);
  }

  getPredictions(clipId: string): Promise<PredictionsDoc> {
    return this.getJson(`/api/clips/${clipId}/predictions`);
  }

  getChroma(clipId: string, bins?: number): Promise<FeaturesDoc> {
    const q = bins ? `&bins=${bins}` : "";
    return this.getJson(`/api/clips/${clipId}/features?kind=chroma${q}`);
  }

  getPitch(clipId: string): Promise<FeaturesDoc> {
    return this.getJson(`/api/clips/${clipId}/features?kind=pitch`);
  }

  audioUrl(clipId: string): string {
    return `${this.base}/api/clips/${clipId}/audio`;
  }

  async saveLabels(
    clipId: string,
    events: LabelEvent[],
    baseVersion: number,
    opts: { force?: boolean; author?: string } = {},
  ): Promise<SaveResult> {
    let response: Response;
    try {
      const qs = opts.force ? "?force=true" : "";
      response = await this.fetchFn(
        `${this.base}/api/clips/${clipId}/labels${qs}`,
        {
          method: "PUT",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({
            base_version: baseVersion,
            events,
            author: opts.author ?? "ui",
          }),
        },
      );
    } catch (err) {
      return { status: "network-error", message: String(err) };
    }
    if (response.status === 200) {
      const doc = await response.json();
      return { status: "ok", version: doc.version };
    }
    if (response.status === 409) {
      const doc = await response.json();
      return {
        status: "conflict",
        currentVersion: doc.detail?.current_version ?? -1,
      };
    }
    if (response.status === 422) {
      const doc = await response.json();
      return {
        status: "violations",
        violations: doc.detail?.violations ?? [String(doc.detail)],
        forceable: doc.detail?.forceable ?? false,
      };
    }
    return {
      status: "network-error",
      message: `unexpected HTTP ${response.status}`,
    };
  }

  async startFineTune(epochs?: number): Promise<{ id: string } | null> {
    const r = await this.fetchFn(`${this.base}/api/jobs/fine_tune`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(epochs ? { epochs } : {}),
    });
    if (r.status === 503) return null; // one job at a time
    if (!r.ok) throw new Error(`fine_tune: HTTP ${r.status}`);
    return await r.json();
  }

  jobStatus(jobId: string): Promise<{ state: string; progress: number;
                                      result_checkpoint: string | null }> {
    return this.getJson(`/api/jobs/${jobId}`);
  }
}
