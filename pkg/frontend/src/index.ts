export {
  ApiError,
  AtlasClient,
  CanceledError,
  StaleModelError,
  type CbcpDocument,
  type CbcpResponse,
  type DomainMeta,
  type FetchLike,
  type GivenRef,
  type MapResponse,
  type ModelMeta,
  type TrailStateResponse,
} from "./api.js";
export { luminance, normalizeValues, rampColor, type Rgb } from "./colormap.js";
export {
  DEFAULT_CELL_PX,
  OVERLAY_ALPHA,
  renderOverlay,
  type OverlayFrame,
  type RasterLike,
} from "./overlay.js";
export {
  DEFAULT_HIT_RADIUS_PX,
  TOI_MARKER_RADIUS_PX,
  fitViewport,
  hitTest,
  hoverLabel,
  pan,
  project,
  renderScatter,
  unproject,
  zoom,
  type ScatterOptions,
  type Viewport,
} from "./scatter.js";
export {
  applyToiClick,
  emptyViewState,
  queriesFor,
  sameToi,
  selectionLabel,
  snapshotView,
  type Breadcrumb,
  type Overlay,
  type Toi,
  type ToiTransition,
  type ViewSnapshot,
  type ViewState,
} from "./state.js";
export { formatTrail, parseTrail, pyJson, type TrailSession, type TrailStep } from "./trail.js";
export { ExplorerApp, type AppOptions, type ClickResult, type PanelRender } from "./app.js";
