import { describe, expect, it } from "vitest";
import type { MapResponse } from "../src/api.js";
import {
  fitViewport,
  hitTest,
  hoverLabel,
  pan,
  project,
  renderScatter,
  unproject,
  zoom,
} from "../src/scatter.js";
import { fixtureJson } from "./helpers.js";

const W = 640;
const H = 480;
const mapA = fixtureJson<MapResponse>("map_pair_A.json");

const TOI_RED = [214, 40, 40] as const;

function hasColorAt(
  frame: { width: number; height: number; pixels: Uint8ClampedArray },
  x: number,
  y: number,
  rgb: readonly [number, number, number],
): boolean {
  if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return false;
  const p = (y * frame.width + x) * 4;
  return (
    frame.pixels[p] === rgb[0] &&
    frame.pixels[p + 1] === rgb[1] &&
    frame.pixels[p + 2] === rgb[2]
  );
}

function countColor(
  frame: { width: number; height: number; pixels: Uint8ClampedArray },
  rgb: readonly [number, number, number],
): number {
  let n = 0;
  for (let p = 0; p < frame.pixels.length; p += 4) {
    if (
      frame.pixels[p] === rgb[0] &&
      frame.pixels[p + 1] === rgb[1] &&
      frame.pixels[p + 2] === rgb[2]
    ) {
      n += 1;
    }
  }
  return n;
}

describe("viewport", () => {
  it("fits the map box centered with padding", () => {
    const vp = fitViewport(mapA.box, W, H);
    const cx = (mapA.box[0]![0]! + mapA.box[0]![1]!) / 2;
    const cy = (mapA.box[1]![0]! + mapA.box[1]![1]!) / 2;
    expect(project(cx, cy, vp, W, H)).toEqual([W / 2, H / 2]);
    for (const x of mapA.box[0]!) {
      for (const y of mapA.box[1]!) {
        const [px, py] = project(x, y, vp, W, H);
        expect(px).toBeGreaterThanOrEqual(0);
        expect(px).toBeLessThanOrEqual(W);
        expect(py).toBeGreaterThanOrEqual(0);
        expect(py).toBeLessThanOrEqual(H);
      }
    }
  });

  it("treats a single-axis box as a flat strip", () => {
    const vp = fitViewport([[-2, 2]], W, H);
    const [px, py] = project(0, 0, vp, W, H);
    expect(px).toBe(W / 2);
    expect(py).toBe(H / 2);
  });

  it("round-trips project and unproject", () => {
    const vp = fitViewport(mapA.box, W, H);
    const [x, y] = [0.0123, -0.0045];
    const [px, py] = project(x, y, vp, W, H);
    const [bx, by] = unproject(px, py, vp, W, H);
    expect(bx).toBeCloseTo(x, 12);
    expect(by).toBeCloseTo(y, 12);
  });

  it("pans so content follows the pointer", () => {
    const vp = fitViewport(mapA.box, W, H);
    const [px0, py0] = project(0.001, 0.002, vp, W, H);
    const panned = pan(vp, 15, -7);
    const [px1, py1] = project(0.001, 0.002, panned, W, H);
    expect(px1 - px0).toBeCloseTo(15, 9);
    expect(py1 - py0).toBeCloseTo(-7, 9);
  });

  it("zooms about an anchor pixel", () => {
    const vp = fitViewport(mapA.box, W, H);
    const anchor: [number, number] = [100, 350];
    const mapPoint = unproject(anchor[0], anchor[1], vp, W, H);
    const zoomed = zoom(vp, 2.5, W, H, anchor);
    const [px, py] = project(mapPoint[0], mapPoint[1], zoomed, W, H);
    expect(px).toBeCloseTo(anchor[0], 9);
    expect(py).toBeCloseTo(anchor[1], 9);
    expect(zoomed.scale).toBeCloseTo(vp.scale * 2.5, 9);
  });

  it("rejects non-positive zoom factors", () => {
    const vp = fitViewport(mapA.box, W, H);
    expect(() => zoom(vp, 0, W, H)).toThrow(/positive/);
    expect(() => zoom(vp, -1, W, H)).toThrow(/positive/);
    expect(() => zoom(vp, Number.NaN, W, H)).toThrow(/positive/);
  });
});

describe("renderScatter", () => {
  it("draws every item of the captured map", () => {
    const vp = fitViewport(mapA.box, W, H);
    const frame = renderScatter(mapA.coords, vp, W, H);
    for (const coord of mapA.coords) {
      const [px, py] = project(coord[0]!, coord[1]!, vp, W, H);
      expect(hasColorAt(frame, Math.round(px), Math.round(py), [38, 50, 56])).toBe(true);
    }
  });

  it("marks the target of interest with a red ring, not a fill", () => {
    const vp = fitViewport(mapA.box, W, H);
    const frame = renderScatter(mapA.coords, vp, W, H, { toiIndex: 7 });
    const [px, py] = project(mapA.coords[7]![0]!, mapA.coords[7]![1]!, vp, W, H);
    const cx = Math.round(px);
    const cy = Math.round(py);
    expect(hasColorAt(frame, cx + 8, cy, TOI_RED)).toBe(true);
    expect(hasColorAt(frame, cx - 8, cy, TOI_RED)).toBe(true);
    expect(hasColorAt(frame, cx, cy + 8, TOI_RED)).toBe(true);
    // Ring interior keeps the point color.
    expect(hasColorAt(frame, cx, cy, [38, 50, 56])).toBe(true);
  });

  it("renders without a marker when no ToI is set", () => {
    const vp = fitViewport(mapA.box, W, H);
    const frame = renderScatter(mapA.coords, vp, W, H);
    expect(countColor(frame, TOI_RED)).toBe(0);
  });

  it("silently clips points outside the frame", () => {
    const vp = fitViewport(mapA.box, W, H);
    const frame = renderScatter([[1e6, 1e6]], vp, W, H);
    let lit = 0;
    for (let p = 3; p < frame.pixels.length; p += 4) {
      if (frame.pixels[p]! > 0) lit += 1;
    }
    expect(lit).toBe(0);
  });

  it("handles well over ten thousand points quickly", () => {
    const n = 20000;
    const coords: number[][] = [];
    let s = 12345;
    const rand = (): number => {
      // Small LCG keeps the fixture deterministic.
      s = (s * 1103515245 + 12345) % 2147483648;
      return s / 2147483648;
    };
    for (let i = 0; i < n; i++) coords.push([rand() * 2 - 1, rand() * 2 - 1]);
    const vp = fitViewport(
      [
        [-1, 1],
        [-1, 1],
      ],
      W,
      H,
    );
    const t0 = performance.now();
    const frame = renderScatter(coords, vp, W, H);
    const elapsed = performance.now() - t0;
    expect(elapsed).toBeLessThan(500);
    let lit = 0;
    for (let p = 3; p < frame.pixels.length; p += 4) {
      if (frame.pixels[p]! > 0) lit += 1;
    }
    expect(lit).toBeGreaterThan(1000);
  });
});

describe("hit testing and hover labels", () => {
  it("finds the item under the pointer and rejects far misses", () => {
    const vp = fitViewport(mapA.box, W, H);
    const [px, py] = project(mapA.coords[3]![0]!, mapA.coords[3]![1]!, vp, W, H);
    expect(hitTest(mapA.coords, vp, W, H, px + 2, py - 1)).toBe(3);
    expect(hitTest(mapA.coords, vp, W, H, -50, -50)).toBe(-1);
  });

  it("prefers the nearest of two candidates", () => {
    const vp = { centerX: 0, centerY: 0, scale: 10 };
    const coords = [
      [0, 0],
      [0.5, 0],
    ];
    const [nearPx, nearPy] = project(0.4, 0, vp, W, H);
    expect(hitTest(coords, vp, W, H, nearPx, nearPy)).toBe(1);
  });

  it("labels the hovered item by id", () => {
    const vp = fitViewport(mapA.box, W, H);
    const [px, py] = project(mapA.coords[7]![0]!, mapA.coords[7]![1]!, vp, W, H);
    expect(hoverLabel(mapA.items, mapA.coords, vp, W, H, px, py)).toBe("a07");
    expect(hoverLabel(mapA.items, mapA.coords, vp, W, H, 1, 1)).toBeNull();
  });
});
