/**
 * Exploration-trail session files.
 *
 * The on-disk format is shared with the server and CLI: one JSON object per
 * line, a {"session": id} header followed by {"chosen", "query"} steps, keys
 * sorted, ", " and ": " separators, non-ASCII escaped. `formatTrail` must
 * reproduce that byte layout exactly so an exported file is interchangeable
 * with a server-side export of the same session.
 */

import type { CbcpDocument, GivenRef } from "./api.js";

export interface TrailStep {
  query: CbcpDocument;
  chosen: string | null;
}

export interface TrailSession {
  sessionId: string;
  steps: TrailStep[];
}

/** Serialize one value the way the server writes session lines. */
export function pyJson(value: unknown): string {
  if (value === null) return "null";
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      return pyNumber(value);
    case "string":
      return pyString(value);
    case "object":
      if (Array.isArray(value)) {
        return "[" + value.map(pyJson).join(", ") + "]";
      }
      return (
        "{" +
        Object.keys(value as Record<string, unknown>)
          .sort()
          .map((k) => pyString(k) + ": " + pyJson((value as Record<string, unknown>)[k]))
          .join(", ") +
        "}"
      );
    default:
      throw new Error(`cannot serialize a ${typeof value} into a trail file`);
  }
}

function pyNumber(n: number): string {
  if (!Number.isFinite(n)) {
    throw new Error("non-finite number in a trail document");
  }
  if (Number.isInteger(n) && Math.abs(n) < 1e15) return String(n);
  let s = String(n);
  // Match the server's float text: single-digit exponents are zero-padded.
  const m = s.match(/^(.*e[+-])(\d)$/);
  if (m) s = m[1]! + "0" + m[2]!;
  return s;
}

function pyString(s: string): string {
  return JSON.stringify(s).replace(
    /[-￿]/g,
    (ch) => "\\u" + ch.charCodeAt(0).toString(16).padStart(4, "0"),
  );
}

/** Render a session to the line-delimited file format, trailing newline included. */
export function formatTrail(session: TrailSession): string {
  const lines = [pyJson({ session: session.sessionId })];
  for (const step of session.steps) {
    lines.push(pyJson({ chosen: step.chosen, query: step.query }));
  }
  return lines.join("\n") + "\n";
}

/** Parse a session file; blank lines are tolerated anywhere. */
export function parseTrail(text: string): TrailSession {
  const rawLines = text.split("\n");
  let sessionId: string | null = null;
  const steps: TrailStep[] = [];
  let lineNo = 0;
  for (const raw of rawLines) {
    lineNo += 1;
    const line = raw.trim();
    if (line === "") continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new Error(`trail line ${lineNo}: not valid JSON`);
    }
    if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
      throw new Error(`trail line ${lineNo}: expected a JSON object`);
    }
    const obj = parsed as Record<string, unknown>;
    if (sessionId === null) {
      if (typeof obj["session"] !== "string" || obj["session"] === "") {
        throw new Error(`trail line ${lineNo}: first line must be a {"session": id} header`);
      }
      sessionId = obj["session"];
      continue;
    }
    steps.push(parseStep(obj, lineNo));
  }
  if (sessionId === null) {
    throw new Error("trail file has no session header");
  }
  return { sessionId, steps };
}

function parseStep(obj: Record<string, unknown>, lineNo: number): TrailStep {
  const chosen = obj["chosen"];
  if (chosen !== null && typeof chosen !== "string") {
    throw new Error(`trail line ${lineNo}: chosen must be an item id or null`);
  }
  const query = obj["query"];
  if (typeof query !== "object" || query === null || Array.isArray(query)) {
    throw new Error(`trail line ${lineNo}: query must be an object`);
  }
  return { query: parseQueryDocument(query as Record<string, unknown>, lineNo), chosen: chosen ?? null };
}

function parseQueryDocument(q: Record<string, unknown>, lineNo: number): CbcpDocument {
  const given = q["given"];
  if (!Array.isArray(given) || given.length === 0) {
    throw new Error(`trail line ${lineNo}: query needs a non-empty given list`);
  }
  const refs: GivenRef[] = given.map((entry) => {
    if (!Array.isArray(entry) || entry.length !== 2 || typeof entry[0] !== "string") {
      throw new Error(`trail line ${lineNo}: each given entry is [domain, anchor]`);
    }
    const anchor: unknown = entry[1];
    if (typeof anchor === "string") return [entry[0], anchor];
    if (Array.isArray(anchor) && anchor.length > 0 && anchor.every((v) => typeof v === "number")) {
      return [entry[0], anchor as number[]];
    }
    throw new Error(`trail line ${lineNo}: anchor must be an item id or a coordinate list`);
  });
  const target = q["target_domain"];
  if (typeof target !== "string" || target === "") {
    throw new Error(`trail line ${lineNo}: query needs a target_domain`);
  }
  const resolution = q["grid_resolution"];
  if (typeof resolution !== "number" || !Number.isInteger(resolution)) {
    throw new Error(`trail line ${lineNo}: grid_resolution must be an integer`);
  }
  const topK = q["top_k"];
  if (typeof topK !== "number" || !Number.isInteger(topK)) {
    throw new Error(`trail line ${lineNo}: top_k must be an integer`);
  }
  return {
    given: refs,
    target_domain: target,
    grid_resolution: resolution,
    top_k: topK,
  };
}
