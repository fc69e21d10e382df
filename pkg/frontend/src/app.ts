/**
 * Explorer application controller.
 *
 * Owns the ViewState and drives the interaction loop: load a model, render
 * side-by-side domain maps, turn item clicks into conditional-density
 * queries, paint the returned rasters as overlays, and keep the exploration
 * trail. The controller never computes densities; it only forwards server
 * rasters through the color ramp.
 *
 * Concurrency: a single logical UI thread. Clicks are sequenced with a
 * monotonically increasing token, and the HTTP client keeps at most one
 * density request in flight, so a newer click cancels an older pending one
 * and stale responses are never committed.
 */

import {
  ApiError,
  AtlasClient,
  CanceledError,
  StaleModelError,
  type CbcpDocument,
  type MapResponse,
} from "./api.js";
import { renderOverlay, DEFAULT_CELL_PX, type OverlayFrame } from "./overlay.js";
import {
  fitViewport,
  hoverLabel,
  pan,
  renderScatter,
  zoom,
  type Viewport,
} from "./scatter.js";
import {
  applyToiClick,
  emptyViewState,
  queriesFor,
  selectionLabel,
  snapshotView,
  type Breadcrumb,
  type Overlay,
  type Toi,
  type ViewState,
} from "./state.js";
import { formatTrail, parseTrail, type TrailStep } from "./trail.js";

export interface AppOptions {
  /** Raster resolution requested per density query. */
  gridResolution?: number;
  /** Ranked-panel length requested per density query. */
  topK?: number;
  /** Pixel size of one raster cell in the rendered overlay. */
  cellPx?: number;
  /** Domain panel size used for projection and hit-testing. */
  mapWidth?: number;
  mapHeight?: number;
}

export type ClickResult =
  | { kind: "rendered"; targets: string[] }
  | { kind: "cleared" }
  | { kind: "superseded" }
  | { kind: "stale"; message: string }
  | { kind: "rejected"; status: number; message: string };

export interface PanelRender {
  scatter: OverlayFrame;
  overlay: OverlayFrame | null;
}

export class ExplorerApp {
  readonly state: ViewState = emptyViewState();
  private readonly gridResolution: number;
  private readonly topK: number;
  private readonly cellPx: number;
  private readonly mapWidth: number;
  private readonly mapHeight: number;
  private clickSeq = 0;

  constructor(
    private readonly client: AtlasClient,
    opts: AppOptions = {},
  ) {
    this.gridResolution = opts.gridResolution ?? 128;
    this.topK = opts.topK ?? 10;
    this.cellPx = opts.cellPx ?? DEFAULT_CELL_PX;
    this.mapWidth = opts.mapWidth ?? 640;
    this.mapHeight = opts.mapHeight ?? 480;
  }

  /** Load model metadata and every domain map, and open a trail session. */
  async load(): Promise<void> {
    const meta = await this.client.meta();
    const maps: Record<string, MapResponse> = {};
    const viewports: Record<string, Viewport> = {};
    for (const domain of meta.domains) {
      const map = await this.client.map(domain.name);
      maps[domain.name] = map;
      viewports[domain.name] = fitViewport(map.box, this.mapWidth, this.mapHeight);
    }
    this.state.meta = meta;
    this.state.maps = maps;
    this.state.viewports = viewports;
    this.state.tois = [];
    this.state.overlays = {};
    this.state.staleModel = false;
    this.state.inlineError = null;
    try {
      const trail = await this.client.trailOpen();
      this.state.trailSessionId = trail.session_id;
      this.state.trailExpired = false;
    } catch {
      // Exploration still works without a server-side trail session.
      this.state.trailSessionId = null;
    }
  }

  /** Re-fetch the model after a stale-hash prompt; breadcrumbs are kept. */
  async reloadModel(): Promise<void> {
    const breadcrumbs = this.state.breadcrumbs;
    const sessionId = this.state.trailSessionId;
    const expired = this.state.trailExpired;
    await this.load();
    this.state.breadcrumbs = breadcrumbs;
    if (sessionId !== null) {
      this.state.trailSessionId = sessionId;
      this.state.trailExpired = expired;
    }
  }

  get domainNames(): string[] {
    return this.state.meta ? this.state.meta.domains.map((d) => d.name) : [];
  }

  /**
   * Handle a click on an item in a domain map.
   *
   * Exactly one density request is issued per target domain of the new
   * selection (one for pair models). On a server rejection the selection
   * rolls back and the message is surfaced inline; a 409 flags the model as
   * stale; a superseded click commits nothing.
   */
  async clickItem(domain: string, item: string): Promise<ClickResult> {
    const meta = this.state.meta;
    if (!meta) throw new Error("no model loaded");
    const map = this.state.maps[domain];
    if (!map) throw new Error(`unknown domain '${domain}'`);
    if (!map.items.includes(item)) {
      throw new Error(`unknown item '${item}' in domain '${domain}'`);
    }

    const clicked: Toi = { domain, item };
    const transition = applyToiClick(meta.order, this.domainNames, this.state.tois, clicked);
    const token = ++this.clickSeq;

    const prevTois = this.state.tois;
    const prevOverlays = this.state.overlays;
    this.state.tois = transition.tois;
    this.state.inlineError = null;

    if (transition.tois.length === 0) {
      // Toggled the only anchor off: clear its overlay, nothing to fetch.
      this.state.overlays = {};
      return { kind: "cleared" };
    }

    const queries = queriesFor(
      this.domainNames,
      transition.tois,
      transition.targets,
      this.gridResolution,
      this.topK,
    );
    const overlays: Record<string, Overlay> = {};
    for (const query of queries) {
      let overlay: Overlay;
      try {
        overlay = await this.fetchOverlay(query, meta.model_hash);
      } catch (err) {
        if (err instanceof CanceledError) return { kind: "superseded" };
        this.state.tois = prevTois;
        this.state.overlays = prevOverlays;
        if (err instanceof StaleModelError) {
          this.state.staleModel = true;
          return { kind: "stale", message: err.message };
        }
        if (err instanceof ApiError) {
          this.state.inlineError = err.message;
          return { kind: "rejected", status: err.status, message: err.message };
        }
        throw err;
      }
      if (token !== this.clickSeq) return { kind: "superseded" };
      overlays[query.target_domain] = overlay;
    }

    this.state.overlays = overlays;
    const chosen =
      transition.kind === "select" && wasTargetOf(this.lastBreadcrumb(), domain)
        ? item
        : null;
    await this.finalizeLastStep(chosen);
    this.state.breadcrumbs.push({
      label: selectionLabel(this.domainNames, transition.tois),
      view: snapshotView(this.state),
      queries,
      chosen: null,
      posted: false,
    });
    return { kind: "rendered", targets: transition.targets };
  }

  /**
   * Restore a breadcrumb: full ViewState first, then re-fetch its recorded
   * queries so the overlay is rebuilt from the same response bytes.
   */
  async replayBreadcrumb(index: number): Promise<ClickResult> {
    const crumb = this.state.breadcrumbs[index];
    if (!crumb) throw new Error(`no breadcrumb at index ${index}`);
    const token = ++this.clickSeq;

    const prevTois = this.state.tois;
    const prevOverlays = this.state.overlays;
    const prevViewports = this.state.viewports;
    this.state.tois = crumb.view.tois.map((t) => ({ ...t }));
    const viewports: Record<string, Viewport> = {};
    for (const [name, vp] of Object.entries(crumb.view.viewports)) {
      viewports[name] = { ...vp };
    }
    this.state.viewports = viewports;
    this.state.inlineError = null;

    const overlays: Record<string, Overlay> = {};
    for (const query of crumb.queries) {
      let overlay: Overlay;
      try {
        overlay = await this.fetchOverlay(query, crumb.view.modelHash);
      } catch (err) {
        if (err instanceof CanceledError) return { kind: "superseded" };
        this.state.tois = prevTois;
        this.state.overlays = prevOverlays;
        this.state.viewports = prevViewports;
        if (err instanceof StaleModelError) {
          this.state.staleModel = true;
          return { kind: "stale", message: err.message };
        }
        if (err instanceof ApiError) {
          this.state.inlineError = err.message;
          return { kind: "rejected", status: err.status, message: err.message };
        }
        throw err;
      }
      if (token !== this.clickSeq) return { kind: "superseded" };
      overlays[query.target_domain] = overlay;
    }
    this.state.overlays = overlays;
    return { kind: "rendered", targets: crumb.queries.map((q) => q.target_domain) };
  }

  private async fetchOverlay(query: CbcpDocument, modelHash: string): Promise<Overlay> {
    const response = await this.client.cbcp(query, modelHash);
    return { response, frame: renderOverlay(response, this.cellPx) };
  }

  private lastBreadcrumb(): Breadcrumb | null {
    const crumbs = this.state.breadcrumbs;
    return crumbs.length > 0 ? crumbs[crumbs.length - 1]! : null;
  }

  /** Record the outcome of the newest step and append it to the server trail. */
  private async finalizeLastStep(chosen: string | null): Promise<void> {
    const crumb = this.lastBreadcrumb();
    if (!crumb || crumb.posted) return;
    crumb.chosen = chosen;
    const query = crumb.queries[0];
    if (!query) return;
    try {
      const sessionId = await this.ensureSession();
      if (sessionId === null) return;
      await this.client.trailAppend(sessionId, query, crumb.chosen);
      crumb.posted = true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.trailExpired = true;
        return;
      }
      if (err instanceof ApiError) return;
      throw err;
    }
  }

  private async ensureSession(): Promise<string | null> {
    if (this.state.trailSessionId !== null && !this.state.trailExpired) {
      return this.state.trailSessionId;
    }
    try {
      const trail = await this.client.trailOpen();
      this.state.trailSessionId = trail.session_id;
      this.state.trailExpired = false;
      return trail.session_id;
    } catch {
      return null;
    }
  }

  /** Post the still-open final step (chosen null) to the server trail. */
  async finalizeTrail(): Promise<void> {
    await this.finalizeLastStep(null);
  }

  /**
   * Serialize the local trail to the shared session-file format. Works even
   * when the server session has expired; that is the export escape hatch.
   */
  exportTrailFile(): string {
    const sessionId = this.state.trailSessionId ?? "local";
    const steps: TrailStep[] = this.state.breadcrumbs
      .filter((b) => b.queries.length > 0)
      .map((b) => ({ query: b.queries[0]!, chosen: b.chosen }));
    return formatTrail({ sessionId, steps });
  }

  /**
   * Replace the local trail with an imported session file. Item anchors are
   * checked against the loaded maps so restored breadcrumbs stay clickable.
   */
  importTrailFile(text: string): void {
    const session = parseTrail(text);
    const meta = this.state.meta;
    if (!meta) throw new Error("no model loaded");
    const crumbs: Breadcrumb[] = session.steps.map((step) => {
      const tois: Toi[] = [];
      for (const [domain, anchor] of step.query.given) {
        const map = this.state.maps[domain];
        if (!map) throw new Error(`imported trail references unknown domain '${domain}'`);
        if (typeof anchor === "string") {
          if (!map.items.includes(anchor)) {
            throw new Error(`imported trail references unknown item '${anchor}' in domain '${domain}'`);
          }
          tois.push({ domain, item: anchor });
        }
      }
      const queries =
        tois.length === step.query.given.length
          ? queriesFor(
              this.domainNames,
              tois,
              this.domainNames.filter((d) => !tois.some((t) => t.domain === d)),
              step.query.grid_resolution,
              step.query.top_k,
            )
          : [step.query];
      return {
        label: tois.length > 0 ? selectionLabel(this.domainNames, tois) : step.query.target_domain,
        view: {
          modelHash: meta.model_hash,
          tois,
          viewports: snapshotView(this.state).viewports,
        },
        queries,
        chosen: step.chosen,
        posted: true,
      };
    });
    this.state.breadcrumbs = crumbs;
    this.state.trailSessionId = session.sessionId;
  }

  /** Current hover label in a domain panel, or null away from any item. */
  hover(domain: string, px: number, py: number): string | null {
    const map = this.state.maps[domain];
    const vp = this.state.viewports[domain];
    if (!map || !vp) return null;
    return hoverLabel(map.items, map.coords, vp, this.mapWidth, this.mapHeight, px, py);
  }

  /** Item id under a pixel position, for wiring pointer events to clicks. */
  itemAt(domain: string, px: number, py: number): string | null {
    return this.hover(domain, px, py);
  }

  panOn(domain: string, dxPx: number, dyPx: number): void {
    const vp = this.state.viewports[domain];
    if (!vp) return;
    this.state.viewports[domain] = pan(vp, dxPx, dyPx);
  }

  zoomOn(domain: string, factor: number, anchorPx?: [number, number]): void {
    const vp = this.state.viewports[domain];
    if (!vp) return;
    this.state.viewports[domain] = zoom(vp, factor, this.mapWidth, this.mapHeight, anchorPx);
  }

  /** Render one domain panel: scatter plus its overlay frame when present. */
  renderDomain(domain: string): PanelRender {
    const map = this.state.maps[domain];
    const vp = this.state.viewports[domain];
    if (!map || !vp) throw new Error(`unknown domain '${domain}'`);
    const toi = this.state.tois.find((t) => t.domain === domain);
    const toiIndex = toi ? map.items.indexOf(toi.item) : -1;
    const scatter = renderScatter(map.coords, vp, this.mapWidth, this.mapHeight, {
      toiIndex: toiIndex >= 0 ? toiIndex : undefined,
    });
    const overlay = this.state.overlays[domain];
    return { scatter, overlay: overlay ? overlay.frame : null };
  }

  /** Ranked items for a target domain, straight from the server response. */
  ranking(domain: string): [string, number][] {
    const overlay = this.state.overlays[domain];
    return overlay ? overlay.response.ranking : [];
  }
}

function wasTargetOf(crumb: Breadcrumb | null, domain: string): boolean {
  if (!crumb) return false;
  return crumb.queries.some((q) => q.target_domain === domain);
}
