// Rendering: chroma heatmap, pitch polyline, and label-lane layout. Layout is
// computed as pure data first so tests can check pixel positions without a
// canvas.

import { Viewport, timeToPixel } from "./timemap.js";
import { CLASS_COLORS, LabelEvent, PredictedEvent } from "./types.js";

export interface EventBox {
  x: number;
  width: number;
  label: string;
  index: number;
  confidence?: number;
}

/** Pixel layout of events inside the viewport (fractional pixels). */
export function layoutEvents<T extends LabelEvent>(
  events: T[],
  viewport: Viewport,
): EventBox[] {
  const boxes: EventBox[] = [];
  events.forEach((e, index) => {
    if (e.offset <= viewport.start || e.onset >= viewport.end) return;
    const x = timeToPixel(viewport, e.onset);
    const xEnd = timeToPixel(viewport, e.offset);
    boxes.push({
      x,
      width: xEnd - x,
      label: e.label,
      index,
      confidence: (e as Partial<PredictedEvent>).confidence,
    });
  });
  return boxes;
}

/** Log-compressed magnitude -> color; chroma values are already in [0, 1]. */
export function chromaColor(value: number): [number, number, number] {
  const v = Math.log1p(40 * Math.max(0, value)) / Math.log1p(40);
  // dark blue -> teal -> bright yellow
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.8 * v - 0.8)));
  const g = Math.round(255 * Math.min(1, 1.2 * v));
  const b = Math.round(90 + 110 * (1 - v) - 60 * v);
  return [r, g, Math.max(0, Math.min(255, b))];
}

export function drawChroma(
  canvas: HTMLCanvasElement,
  data: number[][],
  viewport: Viewport,
  hopSeconds: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const bins = data.length;
  const frames = data[0]?.length ?? 0;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (!frames) return;
  const img = ctx.createImageData(width, height);
  for (let px = 0; px < width; px++) {
    const t = viewport.start + ((px + 0.5) / width) * (viewport.end - viewport.start);
    const frame = Math.floor(t / hopSeconds);
    if (frame < 0 || frame >= frames) continue;
    for (let py = 0; py < height; py++) {
      const bin = bins - 1 - Math.floor((py / height) * bins); // low notes at the bottom
      const [r, g, b] = chromaColor(data[bin][frame]);
      const o = 4 * (py * width + px);
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = b;
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

export function drawPitch(
  canvas: HTMLCanvasElement,
  f0: number[],
  viewport: Viewport,
  hopSeconds: number,
  fMin = 60,
  fMax = 1200,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#e8e8e8";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let pen = false;
  const logMin = Math.log(fMin);
  const logMax = Math.log(fMax);
  for (let i = 0; i < f0.length; i++) {
    const t = (i + 0.5) * hopSeconds;
    if (t < viewport.start || t > viewport.end) continue;
    const hz = f0[i];
    if (hz <= 0) {
      pen = false;
      continue;
    }
    const x = timeToPixel({ ...viewport, widthPx: width }, t);
    const y = height * (1 - (Math.log(hz) - logMin) / (logMax - logMin));
    if (pen) ctx.lineTo(x, y);
    else ctx.moveTo(x, y);
    pen = true;
  }
  ctx.stroke();
}

export function drawLane(
  canvas: HTMLCanvasElement,
  boxes: EventBox[],
  opts: { editable: boolean; selected?: number },
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  for (const box of boxes) {
    const color = CLASS_COLORS[box.label as keyof typeof CLASS_COLORS] ?? "#888";
    ctx.globalAlpha = box.confidence !== undefined
      ? 0.25 + 0.6 * box.confidence // model lane: confidence shading
      : box.index === opts.selected ? 0.95 : 0.75;
    ctx.fillStyle = color;
    ctx.fillRect(box.x, 2, Math.max(box.width, 1), height - 4);
    ctx.globalAlpha = 1;
    if (opts.editable) {
      ctx.strokeStyle = box.index === opts.selected ? "#ffffff" : "#00000055";
      ctx.lineWidth = box.index === opts.selected ? 2 : 1;
      ctx.strokeRect(box.x, 2, Math.max(box.width, 1), height - 4);
    }
    if (box.width > 18) {
      ctx.fillStyle = "#111";
      ctx.font = "11px sans-serif";
      ctx.fillText(box.label, box.x + 3, height - 8);
    }
  }
}
