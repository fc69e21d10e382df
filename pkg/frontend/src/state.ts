/**
 * View state and target-of-interest selection rules.
 *
 * The state is plain data: loaded model identity, per-domain viewports, the
 * current ToI set (zero to two anchors), rendered overlays, and the
 * breadcrumb trail. Selection transitions are pure functions so every rule
 * is testable without a server or a DOM.
 */

import type { CbcpDocument, CbcpResponse, ModelMeta, MapResponse } from "./api.js";
import type { OverlayFrame } from "./overlay.js";
import type { Viewport } from "./scatter.js";

export interface Toi {
  domain: string;
  item: string;
}

/** Everything needed to put the screen back exactly as it was. */
export interface ViewSnapshot {
  modelHash: string;
  tois: Toi[];
  viewports: Record<string, Viewport>;
}

export interface Breadcrumb {
  /** Short human label, e.g. "B:b03" or "A:a00 + B:b00". */
  label: string;
  view: ViewSnapshot;
  /** All density queries issued for this selection, first one is the trail record. */
  queries: CbcpDocument[];
  /** Item picked from this step's ranking, once known. */
  chosen: string | null;
  /** Whether the step has been appended to the server-side trail. */
  posted: boolean;
}

export interface Overlay {
  response: CbcpResponse;
  frame: OverlayFrame;
}

export interface ViewState {
  meta: ModelMeta | null;
  maps: Record<string, MapResponse>;
  viewports: Record<string, Viewport>;
  tois: Toi[];
  /** One rendered heatmap per target domain. */
  overlays: Record<string, Overlay>;
  breadcrumbs: Breadcrumb[];
  trailSessionId: string | null;
  /** Server trail session no longer exists; export/import is the way out. */
  trailExpired: boolean;
  /** Server model hash moved on; the UI should prompt for a reload. */
  staleModel: boolean;
  /** Last rejected selection's server message, surfaced inline. */
  inlineError: string | null;
}

export function emptyViewState(): ViewState {
  return {
    meta: null,
    maps: {},
    viewports: {},
    tois: [],
    overlays: {},
    breadcrumbs: [],
    trailSessionId: null,
    trailExpired: false,
    staleModel: false,
    inlineError: null,
  };
}

export function sameToi(a: Toi, b: Toi): boolean {
  return a.domain === b.domain && a.item === b.item;
}

export type ToiTransition =
  | { kind: "cleared"; tois: Toi[]; targets: string[] }
  | { kind: "select"; tois: Toi[]; targets: string[] };

/**
 * Apply one click to the current ToI set.
 *
 * Rules:
 *  - clicking the active ToI again removes it (toggle off);
 *  - clicking inside a domain that already holds a ToI moves that anchor;
 *  - on 3-domain models a click in a second distinct domain adds a second
 *    anchor; two anchors is the cap, pair models allow one;
 *  - clicking a target-domain item while the selection is full starts a new
 *    selection anchored at the clicked item (the choose-and-continue step).
 *
 * Targets are always the domains without an anchor, in model order, so the
 * invariant "anchors reference existing domains, targets are the rest" holds
 * by construction.
 */
export function applyToiClick(
  order: number,
  domainNames: string[],
  current: Toi[],
  clicked: Toi,
): ToiTransition {
  if (!domainNames.includes(clicked.domain)) {
    throw new Error(`unknown domain '${clicked.domain}'`);
  }
  const existing = current.find((t) => sameToi(t, clicked));
  if (existing) {
    const remaining = current.filter((t) => !sameToi(t, clicked));
    return { kind: "cleared", tois: remaining, targets: targetsFor(domainNames, remaining) };
  }
  const inDomain = current.find((t) => t.domain === clicked.domain);
  let next: Toi[];
  if (inDomain) {
    next = current.map((t) => (t.domain === clicked.domain ? clicked : t));
  } else if (current.length === 0) {
    next = [clicked];
  } else if (order >= 3 && current.length < 2) {
    next = [...current, clicked];
  } else {
    // Selection is full and the click landed in a target domain: restart there.
    next = [clicked];
  }
  return { kind: "select", tois: next, targets: targetsFor(domainNames, next) };
}

function targetsFor(domainNames: string[], tois: Toi[]): string[] {
  if (tois.length === 0) return [];
  const anchored = new Set(tois.map((t) => t.domain));
  return domainNames.filter((d) => !anchored.has(d));
}

/** Breadcrumb label for a selection, anchors in model order. */
export function selectionLabel(domainNames: string[], tois: Toi[]): string {
  const byDomain = new Map(tois.map((t) => [t.domain, t.item]));
  return domainNames
    .filter((d) => byDomain.has(d))
    .map((d) => `${d}:${byDomain.get(d)}`)
    .join(" + ");
}

/** Density-query documents for a selection: one per target domain. */
export function queriesFor(
  domainNames: string[],
  tois: Toi[],
  targets: string[],
  gridResolution: number,
  topK: number,
): CbcpDocument[] {
  const byDomain = new Map(tois.map((t) => [t.domain, t.item]));
  const given: [string, string][] = domainNames
    .filter((d) => byDomain.has(d))
    .map((d) => [d, byDomain.get(d)!]);
  return targets.map((target) => ({
    given,
    target_domain: target,
    grid_resolution: gridResolution,
    top_k: topK,
  }));
}

export function snapshotView(state: ViewState): ViewSnapshot {
  const viewports: Record<string, Viewport> = {};
  for (const [name, vp] of Object.entries(state.viewports)) {
    viewports[name] = { ...vp };
  }
  return {
    modelHash: state.meta ? state.meta.model_hash : "",
    tois: state.tois.map((t) => ({ ...t })),
    viewports,
  };
}
