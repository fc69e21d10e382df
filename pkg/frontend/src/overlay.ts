/**
 * Heatmap overlay rasterization.
 *
 * Turns a /cbcp response into an RGBA frame by pure color mapping: each grid
 * cell becomes a solid block of pixels, with no resampling, smoothing, or any
 * other arithmetic on the density values beyond per-response normalization.
 * The server's raster is therefore the only source of spatial structure.
 */

import type { CbcpResponse } from "./api.js";
import { normalizeValues, rampColor, type Rgb } from "./colormap.js";

export interface OverlayFrame {
  width: number;
  height: number;
  /** RGBA, row-major from the top-left screen pixel. */
  pixels: Uint8ClampedArray;
}

export const OVERLAY_ALPHA = 216;
export const DEFAULT_CELL_PX = 4;

export type RasterLike = Pick<CbcpResponse, "values" | "resolution" | "raster_dims">;

/**
 * Render a density raster to pixels.
 *
 * Screen layout: grid axis 0 maps to screen columns (left to right) and grid
 * axis 1 to screen rows, flipped so the larger coordinate sits higher, which
 * matches how the scatter projection orients map space. A 1-axis raster
 * renders as a single horizontal strip.
 */
export function renderOverlay(
  response: RasterLike,
  cellPx: number = DEFAULT_CELL_PX,
  ramp: (t: number) => Rgb = rampColor,
): OverlayFrame {
  if (!Number.isInteger(cellPx) || cellPx < 1) {
    throw new Error(`cell size must be a positive integer, got ${cellPx}`);
  }
  const res = response.resolution;
  const axes = response.raster_dims;
  if (axes !== 1 && axes !== 2) {
    throw new Error(`cannot render a ${axes}-axis raster`);
  }
  const cols = res;
  const rows = axes === 2 ? res : 1;
  if (response.values.length !== rows * cols) {
    throw new Error(
      `raster has ${response.values.length} values, expected ${rows * cols}`,
    );
  }
  const t = normalizeValues(response.values);
  const width = cols * cellPx;
  const height = rows * cellPx;
  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let c = 0; c < cols; c++) {
    for (let r = 0; r < rows; r++) {
      // Row-major flattened grid: axis-0 index c varies slowest.
      const [red, green, blue] = ramp(t[c * rows + r]!);
      const y0 = (rows - 1 - r) * cellPx;
      const x0 = c * cellPx;
      for (let dy = 0; dy < cellPx; dy++) {
        let p = ((y0 + dy) * width + x0) * 4;
        for (let dx = 0; dx < cellPx; dx++) {
          pixels[p] = red;
          pixels[p + 1] = green;
          pixels[p + 2] = blue;
          pixels[p + 3] = OVERLAY_ALPHA;
          p += 4;
        }
      }
    }
  }
  return { width, height, pixels };
}
