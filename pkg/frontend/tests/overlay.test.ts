import { describe, expect, it } from "vitest";

import { chromaColor, layoutEvents } from "../src/render.js";
import { Viewport, timeToPixel } from "../src/timemap.js";
import { PredictedEvent } from "../src/types.js";

describe("prediction overlay layout", () => {
  // what the service's decode endpoint returns for a clip
  const decoded: PredictedEvent[] = [
    { onset: 0.52, offset: 0.81, label: "K", confidence: 0.91 },
    { onset: 2.1, offset: 3.4, label: "An", confidence: 0.74 },
    { onset: 5.0, offset: 6.05, label: "G", confidence: 0.56 },
  ];
  const viewport: Viewport = { start: 0, end: 8, widthPx: 1024 };

  it("renders every decoded event with its class and confidence", () => {
    const boxes = layoutEvents(decoded, viewport);
    expect(boxes).toHaveLength(decoded.length);
    expect(boxes.map((b) => b.label)).toEqual(["K", "An", "G"]);
    expect(boxes.map((b) => b.confidence)).toEqual([0.91, 0.74, 0.56]);
  });

  it("places boxes within one pixel of the exact time positions", () => {
    const boxes = layoutEvents(decoded, viewport);
    decoded.forEach((e, i) => {
      const exactX = ((e.onset - viewport.start) / (viewport.end - viewport.start)) * viewport.widthPx;
      const exactW = ((e.offset - e.onset) / (viewport.end - viewport.start)) * viewport.widthPx;
      expect(Math.abs(boxes[i].x - exactX)).toBeLessThanOrEqual(1);
      expect(Math.abs(boxes[i].width - exactW)).toBeLessThanOrEqual(1);
    });
  });

  it("culls events outside the zoom window and clips spanning ones", () => {
    const zoomed: Viewport = { start: 2.0, end: 4.0, widthPx: 500 };
    const boxes = layoutEvents(decoded, zoomed);
    expect(boxes).toHaveLength(1);
    expect(boxes[0].label).toBe("An");
    expect(boxes[0].x).toBeCloseTo(timeToPixel(zoomed, 2.1), 6);
  });

  it("layout agrees with timeToPixel everywhere (shared mapping)", () => {
    const boxes = layoutEvents(decoded, viewport);
    decoded.forEach((e, i) => {
      expect(boxes[i].x).toBe(timeToPixel(viewport, e.onset));
      expect(boxes[i].x + boxes[i].width).toBe(timeToPixel(viewport, e.offset));
    });
  });
});

describe("chroma colormap", () => {
  it("is monotone in intensity and bounded", () => {
    let prev = -1;
    for (let v = 0; v <= 1.0001; v += 0.05) {
      const [r, g] = chromaColor(v);
      expect(r).toBeGreaterThanOrEqual(0);
      expect(g).toBeGreaterThanOrEqual(prev - 1); // log-compressed ramp
      prev = g;
    }
    const [r1, g1] = chromaColor(1);
    expect(r1).toBe(255);
    expect(g1).toBe(255);
  });
});
