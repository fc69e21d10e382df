/**
 * Browser shell: binds an ExplorerApp to the DOM.
 *
 * Each domain gets a stacked pair of canvases (heatmap under, scatter over),
 * a shared ranked-item panel, breadcrumb trail, and error/stale banners. All
 * interaction logic lives in the app controller; this layer only forwards
 * pointer events and blits frames.
 */

import type { ExplorerApp } from "./app.js";
import type { OverlayFrame } from "./overlay.js";

interface Panel {
  domain: string;
  overlayCanvas: HTMLCanvasElement;
  scatterCanvas: HTMLCanvasElement;
  label: HTMLDivElement;
}

export interface MountOptions {
  width?: number;
  height?: number;
}

function blit(canvas: HTMLCanvasElement, frame: OverlayFrame | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!frame) return;
  const image = new ImageData(new Uint8ClampedArray(frame.pixels), frame.width, frame.height);
  if (frame.width === canvas.width && frame.height === canvas.height) {
    ctx.putImageData(image, 0, 0);
    return;
  }
  // Heatmap frames are cell-resolution; scale them under the scatter.
  const off = document.createElement("canvas");
  off.width = frame.width;
  off.height = frame.height;
  off.getContext("2d")?.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

export function mountExplorer(
  root: HTMLElement,
  app: ExplorerApp,
  opts: MountOptions = {},
): { refresh: () => void } {
  const width = opts.width ?? 640;
  const height = opts.height ?? 480;
  root.textContent = "";
  root.style.fontFamily = "system-ui, sans-serif";

  const banner = document.createElement("div");
  banner.style.cssText =
    "min-height:1.5em;color:#b00020;font-size:0.9em;margin:4px 0;display:flex;gap:8px;align-items:center";
  root.appendChild(banner);

  const row = document.createElement("div");
  row.style.cssText = "display:flex;gap:12px;flex-wrap:wrap";
  root.appendChild(row);

  const panels: Panel[] = [];
  const ranked = document.createElement("ol");
  ranked.style.cssText = "font-size:0.85em;min-width:10em";
  const trailNav = document.createElement("nav");
  trailNav.style.cssText = "margin-top:8px;font-size:0.85em;display:flex;gap:6px;flex-wrap:wrap";

  const refresh = (): void => {
    banner.textContent = "";
    if (app.state.staleModel) {
      banner.textContent = "model changed on the server";
      const reload = document.createElement("button");
      reload.textContent = "reload";
      reload.onclick = () => {
        void app.reloadModel().then(refresh);
      };
      banner.appendChild(reload);
    } else if (app.state.inlineError) {
      banner.textContent = app.state.inlineError;
    } else if (app.state.trailExpired) {
      banner.textContent = "trail session expired; use export / import";
    }

    for (const panel of panels) {
      const render = app.renderDomain(panel.domain);
      blit(panel.overlayCanvas, render.overlay);
      blit(panel.scatterCanvas, render.scatter);
    }

    ranked.textContent = "";
    for (const domain of app.domainNames) {
      for (const [item, score] of app.ranking(domain)) {
        const li = document.createElement("li");
        li.textContent = `${domain}:${item}  ${score.toFixed(6)}`;
        ranked.appendChild(li);
      }
    }

    trailNav.textContent = "";
    app.state.breadcrumbs.forEach((crumb, index) => {
      const link = document.createElement("button");
      link.textContent = crumb.label;
      link.onclick = () => {
        void app.replayBreadcrumb(index).then(refresh);
      };
      trailNav.appendChild(link);
    });
  };

  for (const domain of app.domainNames) {
    const cell = document.createElement("div");
    const title = document.createElement("h3");
    title.textContent = domain;
    title.style.cssText = "margin:2px 0;font-size:1em";
    cell.appendChild(title);

    const stack = document.createElement("div");
    stack.style.cssText = `position:relative;width:${width}px;height:${height}px;border:1px solid #ccc`;
    const overlayCanvas = document.createElement("canvas");
    const scatterCanvas = document.createElement("canvas");
    for (const canvas of [overlayCanvas, scatterCanvas]) {
      canvas.width = width;
      canvas.height = height;
      canvas.style.cssText = "position:absolute;left:0;top:0";
      stack.appendChild(canvas);
    }
    const label = document.createElement("div");
    label.style.cssText =
      "position:absolute;pointer-events:none;background:#222;color:#fff;" +
      "padding:1px 5px;border-radius:3px;font-size:0.75em;display:none";
    stack.appendChild(label);
    cell.appendChild(stack);
    row.appendChild(cell);

    const panel: Panel = { domain, overlayCanvas, scatterCanvas, label };
    panels.push(panel);

    let dragging = false;
    let moved = false;
    let lastX = 0;
    let lastY = 0;
    scatterCanvas.style.cursor = "crosshair";
    scatterCanvas.addEventListener("pointerdown", (ev) => {
      dragging = true;
      moved = false;
      lastX = ev.offsetX;
      lastY = ev.offsetY;
    });
    scatterCanvas.addEventListener("pointermove", (ev) => {
      if (dragging) {
        const dx = ev.offsetX - lastX;
        const dy = ev.offsetY - lastY;
        if (Math.abs(dx) + Math.abs(dy) > 2) moved = true;
        app.panOn(domain, dx, dy);
        lastX = ev.offsetX;
        lastY = ev.offsetY;
        refresh();
        return;
      }
      const hovered = app.hover(domain, ev.offsetX, ev.offsetY);
      if (hovered) {
        label.textContent = hovered;
        label.style.left = `${ev.offsetX + 10}px`;
        label.style.top = `${ev.offsetY - 10}px`;
        label.style.display = "block";
      } else {
        label.style.display = "none";
      }
    });
    scatterCanvas.addEventListener("pointerup", (ev) => {
      const wasDrag = dragging && moved;
      dragging = false;
      if (wasDrag) return;
      const item = app.itemAt(domain, ev.offsetX, ev.offsetY);
      if (item) {
        void app.clickItem(domain, item).then(refresh);
      }
    });
    scatterCanvas.addEventListener("pointerleave", () => {
      dragging = false;
      label.style.display = "none";
    });
    scatterCanvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.15 : 1 / 1.15;
      app.zoomOn(domain, factor, [ev.offsetX, ev.offsetY]);
      refresh();
    });
  }

  const side = document.createElement("div");
  const rankedTitle = document.createElement("h3");
  rankedTitle.textContent = "ranked";
  rankedTitle.style.cssText = "margin:2px 0;font-size:1em";
  side.appendChild(rankedTitle);
  side.appendChild(ranked);
  row.appendChild(side);

  const controls = document.createElement("div");
  controls.style.cssText = "margin-top:8px;display:flex;gap:8px";
  const exportBtn = document.createElement("button");
  exportBtn.textContent = "export trail";
  exportBtn.onclick = () => {
    void app.finalizeTrail().then(() => {
      const blob = new Blob([app.exportTrailFile()], { type: "application/jsonl" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "trail.jsonl";
      a.click();
      URL.revokeObjectURL(a.href);
    });
  };
  const importInput = document.createElement("input");
  importInput.type = "file";
  importInput.accept = ".jsonl,.txt,application/jsonl";
  importInput.onchange = () => {
    const file = importInput.files?.[0];
    if (!file) return;
    void file.text().then((text) => {
      try {
        app.importTrailFile(text);
      } catch (err) {
        app.state.inlineError = err instanceof Error ? err.message : String(err);
      }
      refresh();
    });
  };
  controls.appendChild(exportBtn);
  controls.appendChild(importInput);
  root.appendChild(controls);
  root.appendChild(trailNav);

  refresh();
  return { refresh };
}
