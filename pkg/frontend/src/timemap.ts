// Linear time<->pixel mapping within a zoom window. Kept as a pure module so
// the invertibility contract (within one pixel at any zoom) is testable
// without a DOM.

export interface Viewport {
  start: number; // seconds at the left edge
  end: number;   // seconds at the right edge
  widthPx: number;
}

export function timeToPixel(v: Viewport, t: number): number {
  return ((t - v.start) / (v.end - v.start)) * v.widthPx;
}

export function pixelToTime(v: Viewport, x: number): number {
  return v.start + (x / v.widthPx) * (v.end - v.start);
}

export function secondsPerPixel(v: Viewport): number {
  return (v.end - v.start) / v.widthPx;
}

export function clampViewport(v: Viewport, duration: number): Viewport {
  const span = Math.min(Math.max(v.end - v.start, 0.05), duration);
  let start = Math.max(0, Math.min(v.start, duration - span));
  return { start, end: start + span, widthPx: v.widthPx };
}

export function zoomAround(v: Viewport, t: number, factor: number,
                           duration: number): Viewport {
  const span = (v.end - v.start) * factor;
  const frac = (t - v.start) / (v.end - v.start);
  return clampViewport(
    { start: t - frac * span, end: t + (1 - frac) * span, widthPx: v.widthPx },
    duration,
  );
}
