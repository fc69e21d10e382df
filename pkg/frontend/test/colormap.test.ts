import { describe, expect, it } from "vitest";
import { luminance, normalizeValues, rampColor } from "../src/colormap.js";
import { fixtureJson } from "./helpers.js";
import type { CbcpResponse } from "../src/api.js";

describe("rampColor", () => {
  it("never renders a higher value lighter", () => {
    let prev = Infinity;
    for (let i = 0; i <= 1000; i++) {
      const lum = luminance(rampColor(i / 1000));
      expect(lum).toBeLessThanOrEqual(prev + 1e-9);
      prev = lum;
    }
  });

  it("spans a wide lightness range", () => {
    expect(luminance(rampColor(0)) - luminance(rampColor(1))).toBeGreaterThan(180);
  });

  it("clamps out-of-range and non-finite inputs", () => {
    expect(rampColor(-5)).toEqual(rampColor(0));
    expect(rampColor(7)).toEqual(rampColor(1));
    expect(rampColor(Number.NaN)).toEqual(rampColor(0));
  });

  it("produces integer channels in range", () => {
    for (let i = 0; i <= 100; i++) {
      for (const ch of rampColor(i / 100)) {
        expect(Number.isInteger(ch)).toBe(true);
        expect(ch).toBeGreaterThanOrEqual(0);
        expect(ch).toBeLessThanOrEqual(255);
      }
    }
  });
});

describe("normalizeValues", () => {
  it("rescales to the response's own min and max", () => {
    expect(Array.from(normalizeValues([2, 4, 6]))).toEqual([0, 0.5, 1]);
  });

  it("maps a constant field to the light end", () => {
    expect(Array.from(normalizeValues([3, 3, 3]))).toEqual([0, 0, 0]);
    expect(Array.from(normalizeValues([0]))).toEqual([0]);
  });

  it("is invariant to affine rescaling of the input", () => {
    const base = [0.1, 0.4, 0.25, 0.9, 0.6];
    const scaled = base.map((v) => 7.5 * v + 3);
    const a = normalizeValues(base);
    const b = normalizeValues(scaled);
    for (let i = 0; i < base.length; i++) {
      expect(b[i]).toBeCloseTo(a[i]!, 10);
    }
  });

  it("puts the captured response's argmax cell at exactly 1", () => {
    const resp = fixtureJson<CbcpResponse>("cbcp_pair.json");
    const t = normalizeValues(resp.values);
    const [i, j] = resp.argmax;
    const flat = i! * resp.resolution + j!;
    expect(t[flat]).toBe(1);
    expect(Math.min(...t)).toBe(0);
    expect(Math.max(...t)).toBe(1);
  });
});
