// Shared types for the annotation UI. Label classes use the short codes the
// service serializes (K, Me, Mu, H, An, G).

export type ClassCode = "K" | "Me" | "Mu" | "H" | "An" | "G";

export const CLASS_CODES: ClassCode[] = ["K", "Me", "Mu", "H", "An", "G"];

export const CLASS_NAMES: Record<ClassCode, string> = {
  K: "Kan",
  Me: "Meend",
  Mu: "Murki",
  H: "Nyas",
  An: "Andolan",
  G: "Gamak",
};

export const CLASS_COLORS: Record<ClassCode, string> = {
  K: "#e6734d",
  Me: "#4d9de6",
  Mu: "#9b59d0",
  H: "#3bb273",
  An: "#e0b43a",
  G: "#d14d6e",
};

// keyboard shortcut -> class (K/M/U/H/A/G)
export const CLASS_KEYS: Record<string, ClassCode> = {
  k: "K",
  m: "Me",
  u: "Mu",
  h: "H",
  a: "An",
  g: "G",
};

export interface LabelEvent {
  onset: number;
  offset: number;
  label: ClassCode;
}

export interface PredictedEvent extends LabelEvent {
  confidence: number;
}

/** One frame hop of the default feature grid (17.5 ms); arrow-key nudge unit. */
export const FRAME_HOP_SECONDS = 772 / 44100;

export function isClassCode(s: string): s is ClassCode {
  return (CLASS_CODES as string[]).includes(s);
}

export function sortEvents<T extends LabelEvent>(events: T[]): T[] {
  return [...events].sort((a, b) => a.onset - b.onset || a.offset - b.offset);
}

/** Index of the first pair violating non-overlap, or -1. */
export function firstOverlap(events: LabelEvent[]): number {
  for (let i = 1; i < events.length; i++) {
    if (events[i].onset < events[i - 1].offset) return i;
  }
  return -1;
}
