/**
 * Canvas-style scatter rendering for domain maps.
 *
 * All drawing targets a plain RGBA byte frame, so rendering is deterministic
 * and testable off-browser; a browser shell blits frames into <canvas>
 * ImageData. Point drawing is direct pixel fill, which stays fast well past
 * ten thousand points.
 */

import type { OverlayFrame } from "./overlay.js";

export interface Viewport {
  /** Map-space coordinates at the frame center. */
  centerX: number;
  centerY: number;
  /** Pixels per map-space unit. */
  scale: number;
}

export const TOI_MARKER_RADIUS_PX = 8;
export const DEFAULT_HIT_RADIUS_PX = 8;

const POINT_RGBA: readonly [number, number, number, number] = [38, 50, 56, 255];
const TOI_RGBA: readonly [number, number, number, number] = [214, 40, 40, 255];

/**
 * Viewport that fits a map box into a frame with padding on every side.
 * 1-axis maps arrive with a single [lo, hi]; the y extent is treated as zero.
 */
export function fitViewport(
  box: number[][],
  width: number,
  height: number,
  padFraction = 0.08,
): Viewport {
  const [xlo, xhi] = spanOf(box[0]);
  const [ylo, yhi] = box.length > 1 ? spanOf(box[1]) : [0, 0];
  const spanX = Math.max(xhi - xlo, 1e-12);
  const spanY = Math.max(yhi - ylo, 1e-12);
  const usable = 1 - 2 * padFraction;
  const scale = Math.min((width * usable) / spanX, (height * usable) / spanY);
  return {
    centerX: (xlo + xhi) / 2,
    centerY: (ylo + yhi) / 2,
    scale,
  };
}

function spanOf(range: number[] | undefined): [number, number] {
  if (!range || range.length < 2) throw new Error("map box axis needs [lo, hi]");
  return [range[0]!, range[1]!];
}

/** Map space to frame pixels; larger y is higher on screen. */
export function project(
  x: number,
  y: number,
  vp: Viewport,
  width: number,
  height: number,
): [number, number] {
  return [
    width / 2 + (x - vp.centerX) * vp.scale,
    height / 2 - (y - vp.centerY) * vp.scale,
  ];
}

/** Frame pixels back to map space; inverse of project. */
export function unproject(
  px: number,
  py: number,
  vp: Viewport,
  width: number,
  height: number,
): [number, number] {
  return [
    vp.centerX + (px - width / 2) / vp.scale,
    vp.centerY - (py - height / 2) / vp.scale,
  ];
}

/** Pan by a pixel delta (drag gesture: content follows the pointer). */
export function pan(vp: Viewport, dxPx: number, dyPx: number): Viewport {
  return {
    centerX: vp.centerX - dxPx / vp.scale,
    centerY: vp.centerY + dyPx / vp.scale,
    scale: vp.scale,
  };
}

/**
 * Zoom by a factor, keeping the map point under the anchor pixel fixed.
 * Without an anchor the frame center is the fixed point.
 */
export function zoom(
  vp: Viewport,
  factor: number,
  width: number,
  height: number,
  anchorPx?: [number, number],
): Viewport {
  if (!(factor > 0) || !Number.isFinite(factor)) {
    throw new Error(`zoom factor must be positive, got ${factor}`);
  }
  const scale = vp.scale * factor;
  if (!anchorPx) return { ...vp, scale };
  const [ax, ay] = unproject(anchorPx[0], anchorPx[1], vp, width, height);
  return {
    centerX: ax - (anchorPx[0] - width / 2) / scale,
    centerY: ay + (anchorPx[1] - height / 2) / scale,
    scale,
  };
}

function displayXY(coord: number[]): [number, number] {
  return [coord[0] ?? 0, coord[1] ?? 0];
}

export interface ScatterOptions {
  /** Index of the item carrying the target-of-interest marker, if any. */
  toiIndex?: number;
  pointSizePx?: number;
}

/**
 * Draw every item as a small filled square, plus a red circle marker around
 * the selected target of interest. Returns a fresh frame.
 */
export function renderScatter(
  coords: number[][],
  vp: Viewport,
  width: number,
  height: number,
  opts: ScatterOptions = {},
): OverlayFrame {
  const pixels = new Uint8ClampedArray(width * height * 4);
  const frame: OverlayFrame = { width, height, pixels };
  const half = Math.max(1, Math.floor((opts.pointSizePx ?? 3) / 2));
  for (const coord of coords) {
    const [x, y] = displayXY(coord);
    const [px, py] = project(x, y, vp, width, height);
    fillSquare(frame, Math.round(px), Math.round(py), half, POINT_RGBA);
  }
  if (opts.toiIndex !== undefined) {
    const coord = coords[opts.toiIndex];
    if (coord) {
      const [x, y] = displayXY(coord);
      const [px, py] = project(x, y, vp, width, height);
      strokeCircle(frame, Math.round(px), Math.round(py), TOI_MARKER_RADIUS_PX, TOI_RGBA);
    }
  }
  return frame;
}

function setPixel(
  frame: OverlayFrame,
  x: number,
  y: number,
  rgba: readonly [number, number, number, number],
): void {
  if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return;
  const p = (y * frame.width + x) * 4;
  frame.pixels[p] = rgba[0];
  frame.pixels[p + 1] = rgba[1];
  frame.pixels[p + 2] = rgba[2];
  frame.pixels[p + 3] = rgba[3];
}

function fillSquare(
  frame: OverlayFrame,
  cx: number,
  cy: number,
  half: number,
  rgba: readonly [number, number, number, number],
): void {
  for (let y = cy - half; y <= cy + half; y++) {
    for (let x = cx - half; x <= cx + half; x++) {
      setPixel(frame, x, y, rgba);
    }
  }
}

function strokeCircle(
  frame: OverlayFrame,
  cx: number,
  cy: number,
  radius: number,
  rgba: readonly [number, number, number, number],
): void {
  // Two-pixel-wide ring, drawn by scanning the bounding square.
  const rOut = radius + 0.6;
  const rIn = radius - 1.4;
  const lim = Math.ceil(rOut);
  for (let dy = -lim; dy <= lim; dy++) {
    for (let dx = -lim; dx <= lim; dx++) {
      const d = Math.hypot(dx, dy);
      if (d <= rOut && d >= rIn) setPixel(frame, cx + dx, cy + dy, rgba);
    }
  }
}

/**
 * Index of the item nearest to a pixel position, or -1 when none lies within
 * the hit radius. Drives both click selection and hover labels.
 */
export function hitTest(
  coords: number[][],
  vp: Viewport,
  width: number,
  height: number,
  px: number,
  py: number,
  radiusPx: number = DEFAULT_HIT_RADIUS_PX,
): number {
  let best = -1;
  let bestDist = radiusPx;
  for (let i = 0; i < coords.length; i++) {
    const [x, y] = displayXY(coords[i]!);
    const [qx, qy] = project(x, y, vp, width, height);
    const d = Math.hypot(qx - px, qy - py);
    if (d <= bestDist) {
      best = i;
      bestDist = d;
    }
  }
  return best;
}

/** Hover label for a pixel position: the item id under the cursor, if any. */
export function hoverLabel(
  items: string[],
  coords: number[][],
  vp: Viewport,
  width: number,
  height: number,
  px: number,
  py: number,
  radiusPx: number = DEFAULT_HIT_RADIUS_PX,
): string | null {
  const idx = hitTest(coords, vp, width, height, px, py, radiusPx);
  return idx >= 0 ? (items[idx] ?? null) : null;
}
