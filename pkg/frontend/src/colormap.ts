/**
 * Monotone sequential color ramp for density overlays.
 *
 * The ramp is pure color mapping: normalized value in, color out. Anchors are
 * ordered strictly light-to-dark so that a higher density is never rendered
 * lighter, and linear interpolation between anchors preserves that order.
 */

export type Rgb = readonly [number, number, number];

const STOPS: readonly Rgb[] = [
  [251, 248, 230],
  [200, 220, 180],
  [125, 192, 167],
  [58, 143, 157],
  [44, 82, 133],
  [29, 35, 80],
];

/** Rec. 709 relative luminance on 0..255 channels. */
export function luminance(color: Rgb): number {
  return 0.2126 * color[0] + 0.7152 * color[1] + 0.0722 * color[2];
}

/** Color for a normalized value t in [0, 1]; out-of-range t is clamped. */
export function rampColor(t: number): Rgb {
  const x = Number.isFinite(t) ? Math.min(1, Math.max(0, t)) : 0;
  const pos = x * (STOPS.length - 1);
  const i = Math.min(Math.floor(pos), STOPS.length - 2);
  const f = pos - i;
  const a = STOPS[i]!;
  const b = STOPS[i + 1]!;
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

/**
 * Rescale one response's values to [0, 1] against their own min and max.
 * Normalization is per response, never across responses; a constant field
 * maps to all zeros (the lightest end of the ramp).
 */
export function normalizeValues(values: ArrayLike<number>): Float64Array {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < values.length; i++) {
    const v = values[i]!;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const out = new Float64Array(values.length);
  if (!(hi > lo)) return out;
  const span = hi - lo;
  for (let i = 0; i < values.length; i++) {
    out[i] = (values[i]! - lo) / span;
  }
  return out;
}
