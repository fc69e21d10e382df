/**
 * Test support: fixture loading and a fake HTTP endpoint.
 *
 * Fixtures under test/fixtures are byte-for-byte captures from a live server
 * running two small deterministically trained models (a 2-domain pair and a
 * 3-domain triple). The fake replays those exact bytes, so anything the
 * client parses here is exactly what the real wire carries.
 */

import { readFileSync } from "node:fs";
import { createHash } from "node:crypto";
import type { CbcpDocument, FetchLike } from "../src/api.js";

export function fixturePath(name: string): URL {
  return new URL(`./fixtures/${name}`, import.meta.url);
}

export function fixtureText(name: string): string {
  return readFileSync(fixturePath(name), "utf8");
}

export function fixtureJson<T = unknown>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export function sha256(bytes: Uint8Array | Uint8ClampedArray | string): string {
  return createHash("sha256").update(bytes as Uint8Array | string).digest("hex");
}

function jsonResponse(status: number, text: string): Response {
  return new Response(text, {
    status,
    headers: { "content-type": "application/json" },
  });
}

function errorResponse(status: number, message: string): Response {
  return jsonResponse(status, JSON.stringify({ error: message }));
}

interface CbcpRoute {
  givenKey: string;
  target: string;
  resolution: number;
  text: string;
}

interface RecordedStep {
  query: unknown;
  chosen: string | null;
}

export interface RecordedRequest {
  method: string;
  path: string;
  body: unknown;
}

/**
 * In-memory stand-in for the model server. Replays captured response bytes,
 * enforces the model-hash gate, and keeps trail sessions, while recording
 * every request for assertions.
 */
export class FakeAtlas {
  readonly requests: RecordedRequest[] = [];
  readonly sessions = new Map<string, RecordedStep[]>();
  /** Session ids handed out by POST /trail, in order; then generated ones. */
  readonly sessionIds: string[] = [];
  /** Item ids to reject with 404 even when a route would match. */
  readonly rejectItems = new Set<string>();
  private readonly cbcpRoutes: CbcpRoute[] = [];
  private metaText = "";
  private readonly mapTexts = new Map<string, string>();
  private modelHash = "";
  private openedCount = 0;

  get cbcpCount(): number {
    return this.requests.filter((r) => r.method === "POST" && r.path === "/cbcp").length;
  }

  setModel(metaFixture: string, maps: Record<string, string>): void {
    this.metaText = fixtureText(metaFixture);
    this.modelHash = (JSON.parse(this.metaText) as { model_hash: string }).model_hash;
    this.mapTexts.clear();
    for (const [domain, fixture] of Object.entries(maps)) {
      this.mapTexts.set(domain, fixtureText(fixture));
    }
  }

  get hash(): string {
    return this.modelHash;
  }

  /** Swap the served model hash, as a retrain-and-reload would. */
  driftModel(newHash: string): void {
    const meta = JSON.parse(this.metaText) as Record<string, unknown>;
    meta["model_hash"] = newHash;
    this.metaText = JSON.stringify(meta);
    this.modelHash = newHash;
  }

  /** Forget every open trail session, as a server restart would. */
  expire(): void {
    this.sessions.clear();
  }

  addCbcp(given: CbcpDocument["given"], target: string, fixture: string): void {
    const text = fixtureText(fixture);
    const resolution = (JSON.parse(text) as { resolution: number }).resolution;
    this.cbcpRoutes.push({
      givenKey: JSON.stringify(given),
      target,
      resolution,
      text,
    });
  }

  readonly fetch: FetchLike = async (input, init) => {
    const url = new URL(input);
    const method = (init?.method ?? "GET").toUpperCase();
    let body: unknown;
    if (typeof init?.body === "string") {
      try {
        body = JSON.parse(init.body);
      } catch {
        body = init.body;
      }
    }
    this.requests.push({ method, path: url.pathname, body });
    return this.route(method, url, body);
  };

  private route(method: string, url: URL, body: unknown): Response {
    const path = url.pathname;
    if (method === "GET" && path === "/model/meta") {
      return jsonResponse(200, this.metaText);
    }
    if (method === "GET" && path.startsWith("/map/")) {
      const domain = decodeURIComponent(path.slice("/map/".length));
      const text = this.mapTexts.get(domain);
      if (text === undefined) return errorResponse(404, `unknown domain '${domain}'`);
      return jsonResponse(200, text);
    }
    if (method === "POST" && path === "/cbcp") {
      return this.routeCbcp(body);
    }
    if (method === "POST" && path === "/trail") {
      return this.routeTrailPost(body);
    }
    if (path.startsWith("/trail/")) {
      return this.routeTrailId(method, path.slice("/trail/".length));
    }
    return errorResponse(404, `no route for ${method} ${path}`);
  }

  private routeCbcp(body: unknown): Response {
    if (typeof body !== "object" || body === null) {
      return errorResponse(400, "request body must be a JSON object");
    }
    const doc = body as Record<string, unknown>;
    const hash = doc["model_hash"];
    if (typeof hash === "string" && hash !== this.modelHash) {
      return errorResponse(
        409,
        `model hash mismatch: client has '${hash}', server has '${this.modelHash}'`,
      );
    }
    const given = doc["given"];
    if (Array.isArray(given)) {
      for (const entry of given) {
        if (Array.isArray(entry) && typeof entry[1] === "string" && this.rejectItems.has(entry[1])) {
          return errorResponse(404, `unknown item '${entry[1]}' in domain '${String(entry[0])}'`);
        }
      }
    }
    const givenKey = JSON.stringify(given);
    for (const route of this.cbcpRoutes) {
      if (
        route.givenKey === givenKey &&
        route.target === doc["target_domain"] &&
        route.resolution === doc["grid_resolution"]
      ) {
        return jsonResponse(200, route.text);
      }
    }
    return errorResponse(404, `no fixture for given=${givenKey} target=${String(doc["target_domain"])}`);
  }

  private routeTrailPost(body: unknown): Response {
    const doc = (typeof body === "object" && body !== null ? body : {}) as Record<string, unknown>;
    const sessionId = doc["session_id"];
    if (sessionId === undefined || sessionId === null) {
      const id = this.sessionIds[this.openedCount] ?? `fake-session-${this.openedCount}`;
      this.openedCount += 1;
      this.sessions.set(id, []);
      return jsonResponse(200, JSON.stringify({ session_id: id, length: 0 }));
    }
    if (typeof sessionId !== "string") {
      return errorResponse(400, "session_id must be a string");
    }
    const steps = this.sessions.get(sessionId);
    if (steps === undefined) {
      return errorResponse(404, `unknown trail session '${sessionId}'`);
    }
    const chosen = doc["chosen"];
    if (chosen !== undefined && chosen !== null && typeof chosen !== "string") {
      return errorResponse(400, "chosen must be an item id or null");
    }
    steps.push({ query: doc["query"], chosen: (chosen as string | null | undefined) ?? null });
    return jsonResponse(200, JSON.stringify({ session_id: sessionId, length: steps.length }));
  }

  private routeTrailId(method: string, id: string): Response {
    const steps = this.sessions.get(decodeURIComponent(id));
    if (steps === undefined) {
      return errorResponse(404, `unknown trail session '${id}'`);
    }
    if (method === "GET") {
      return jsonResponse(200, JSON.stringify({ session_id: id, steps }));
    }
    if (method === "DELETE") {
      this.sessions.delete(decodeURIComponent(id));
      return new Response(null, { status: 204 });
    }
    return errorResponse(405, "method not allowed");
  }
}

/** Fake wired to the 2-domain fixture model, with its cbcp captures mounted. */
export function pairServer(): FakeAtlas {
  const fake = new FakeAtlas();
  fake.setModel("meta_pair.json", { A: "map_pair_A.json", B: "map_pair_B.json" });
  fake.addCbcp([["B", "b03"]], "A", "cbcp_pair.json");
  fake.addCbcp([["A", "a07"]], "B", "cbcp_pair_a07_B.json");
  fake.addCbcp([["B", "b05"]], "A", "cbcp_pair_b05_A.json");
  return fake;
}

/** Fake wired to the 3-domain fixture model. */
export function tripleServer(): FakeAtlas {
  const fake = new FakeAtlas();
  fake.setModel("meta_triple.json", {
    A: "map_triple_A.json",
    B: "map_triple_B.json",
    C: "map_triple_C.json",
  });
  fake.addCbcp([["A", "a00"]], "B", "cbcp_triple_a_B.json");
  fake.addCbcp([["A", "a00"]], "C", "cbcp_triple_a_C.json");
  fake.addCbcp([["A", "a00"], ["B", "b00"]], "C", "cbcp_triple_ab_C.json");
  return fake;
}
