import { describe, expect, it } from "vitest";

import {
  Viewport,
  clampViewport,
  pixelToTime,
  timeToPixel,
  zoomAround,
} from "../src/timemap.js";

describe("time<->pixel mapping", () => {
  const viewports: Viewport[] = [
    { start: 0, end: 10, widthPx: 1000 },
    { start: 3.2, end: 3.9, widthPx: 640 },
    { start: 120, end: 600, widthPx: 1920 },
  ];

  it("is invertible within one pixel at any zoom", () => {
    for (const v of viewports) {
      for (let i = 0; i <= 50; i++) {
        const t = v.start + ((v.end - v.start) * i) / 50;
        const px = timeToPixel(v, t);
        const rounded = Math.round(px);
        const back = pixelToTime(v, rounded);
        const errPx = Math.abs(timeToPixel(v, back) - px);
        expect(errPx).toBeLessThanOrEqual(1);
      }
    }
  });

  it("round-trips exactly without rounding", () => {
    const v = viewports[1];
    for (const t of [3.2, 3.5, 3.8999]) {
      expect(pixelToTime(v, timeToPixel(v, t))).toBeCloseTo(t, 9);
    }
  });

  it("maps the window edges to the canvas edges", () => {
    const v = viewports[0];
    expect(timeToPixel(v, 0)).toBe(0);
    expect(timeToPixel(v, 10)).toBe(1000);
  });

  it("zoom keeps the anchor point fixed", () => {
    const v = viewports[0];
    const anchor = 4.0;
    const zoomed = zoomAround(v, anchor, 0.5, 10);
    expect(timeToPixel(zoomed, anchor)).toBeCloseTo(timeToPixel(v, anchor), 6);
    expect(zoomed.end - zoomed.start).toBeCloseTo(5, 9);
  });

  it("clamps the viewport to the clip", () => {
    const clamped = clampViewport({ start: -3, end: 4, widthPx: 500 }, 10);
    expect(clamped.start).toBe(0);
    const tail = clampViewport({ start: 8, end: 15, widthPx: 500 }, 10);
    expect(tail.end).toBeCloseTo(10, 9);
  });
});
