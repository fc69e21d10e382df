/**
 * Typed client for the cooc-atlas HTTP interface.
 *
 * Every byte of density data shown by this UI comes through this module;
 * nothing downstream recomputes or resamples what the server returns.
 */

export interface DomainMeta {
  name: string;
  size: number;
  dims: number;
  projection: "full" | "first-2";
}

export interface ModelMeta {
  model_hash: string;
  order: number;
  use_c: boolean;
  domains: DomainMeta[];
}

export interface MapResponse {
  domain: string;
  projection: string;
  /** One [lo, hi] pair per displayed axis. */
  box: number[][];
  items: string[];
  /** Row i is the displayed coordinate of items[i]. */
  coords: number[][];
}

/** A conditioning anchor: an item id, or a free point in that domain's space. */
export type GivenRef = [string, string | number[]];

/** Document form of a conditional-density query, as posted to /cbcp and /trail. */
export interface CbcpDocument {
  given: GivenRef[];
  target_domain: string;
  grid_resolution: number;
  top_k: number;
}

export interface CbcpResponse {
  model_hash: string;
  target_domain: string;
  resolution: number;
  raster_dims: number;
  /** One [lo, hi] per raster axis. */
  axis_ranges: number[][];
  /** Row-major flattened grid of conditional-density values. */
  values: number[];
  vmin: number;
  vmax: number;
  argmax: number[];
  ranking: [string, number][];
  item_coords: number[][];
}

export interface TrailStateResponse {
  session_id: string;
  length: number;
}

/** Non-2xx response; message is the server's error body when present. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** 409: the server's model snapshot no longer matches the hash we loaded. */
export class StaleModelError extends ApiError {
  constructor(message: string) {
    super(409, message);
    this.name = "StaleModelError";
  }
}

/** The request was superseded by a newer one and aborted. */
export class CanceledError extends Error {
  constructor(message = "superseded by a newer request") {
    super(message);
    this.name = "CanceledError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

const defaultFetch: FetchLike = (input, init) => fetch(input, init);

/**
 * HTTP client with single-flight density queries: issuing a new /cbcp call
 * aborts any still-pending one, so the newest selection always wins and at
 * most one heatmap render is in flight.
 */
export class AtlasClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  private inflight: AbortController | null = null;

  constructor(baseUrl: string, fetchFn: FetchLike = defaultFetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  /** True while a /cbcp request is pending. */
  cbcpPending(): boolean {
    return this.inflight !== null;
  }

  async meta(): Promise<ModelMeta> {
    return (await this.request("GET", "/model/meta")) as ModelMeta;
  }

  async map(domain: string): Promise<MapResponse> {
    return (await this.request("GET", `/map/${encodeURIComponent(domain)}`)) as MapResponse;
  }

  /**
   * Fetch a conditional-density raster. `modelHash` rides along so the server
   * can reject the query if its snapshot has moved on (409).
   */
  async cbcp(doc: CbcpDocument, modelHash?: string): Promise<CbcpResponse> {
    this.inflight?.abort();
    const ctl = new AbortController();
    this.inflight = ctl;
    const body: Record<string, unknown> = { ...doc };
    if (modelHash !== undefined) body["model_hash"] = modelHash;
    try {
      const resp = await this.fetchFn(this.baseUrl + "/cbcp", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
        signal: ctl.signal,
      });
      return (await this.decode(resp)) as CbcpResponse;
    } catch (err) {
      if (ctl.signal.aborted) throw new CanceledError();
      throw err;
    } finally {
      if (this.inflight === ctl) this.inflight = null;
    }
  }

  async trailOpen(): Promise<TrailStateResponse> {
    return (await this.request("POST", "/trail", {})) as TrailStateResponse;
  }

  async trailAppend(
    sessionId: string,
    query: CbcpDocument,
    chosen: string | null,
  ): Promise<TrailStateResponse> {
    return (await this.request("POST", "/trail", {
      session_id: sessionId,
      query,
      chosen,
    })) as TrailStateResponse;
  }

  async trailSteps(sessionId: string): Promise<unknown> {
    return this.request("GET", `/trail/${encodeURIComponent(sessionId)}`);
  }

  async trailLines(sessionId: string): Promise<string> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/trail/${encodeURIComponent(sessionId)}?format=jsonl`,
      { method: "GET" },
    );
    if (!resp.ok) await this.decode(resp);
    return resp.text();
  }

  async trailDelete(sessionId: string): Promise<void> {
    await this.request("DELETE", `/trail/${encodeURIComponent(sessionId)}`);
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.baseUrl + path, init);
    return this.decode(resp);
  }

  private async decode(resp: Response): Promise<unknown> {
    if (resp.ok) {
      if (resp.status === 204) return undefined;
      return resp.json();
    }
    let message = `http ${resp.status}`;
    try {
      const body: unknown = await resp.json();
      if (
        typeof body === "object" &&
        body !== null &&
        typeof (body as { error?: unknown }).error === "string"
      ) {
        message = (body as { error: string }).error;
      }
    } catch {
      // non-JSON error body; keep the generic message
    }
    if (resp.status === 409) throw new StaleModelError(message);
    throw new ApiError(resp.status, message);
  }
}
