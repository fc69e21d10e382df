import { describe, expect, it } from "vitest";
import {
  applyToiClick,
  emptyViewState,
  queriesFor,
  selectionLabel,
  snapshotView,
  type Toi,
} from "../src/state.js";

const PAIR = ["A", "B"];
const TRIPLE = ["A", "B", "C"];

const toi = (domain: string, item: string): Toi => ({ domain, item });

describe("applyToiClick on a pair model", () => {
  it("selects a first anchor and targets the other domain", () => {
    const t = applyToiClick(2, PAIR, [], toi("B", "b03"));
    expect(t).toEqual({ kind: "select", tois: [toi("B", "b03")], targets: ["A"] });
  });

  it("toggles the active anchor off", () => {
    const t = applyToiClick(2, PAIR, [toi("B", "b03")], toi("B", "b03"));
    expect(t).toEqual({ kind: "cleared", tois: [], targets: [] });
  });

  it("moves the anchor on a click elsewhere in its domain", () => {
    const t = applyToiClick(2, PAIR, [toi("B", "b03")], toi("B", "b05"));
    expect(t).toEqual({ kind: "select", tois: [toi("B", "b05")], targets: ["A"] });
  });

  it("restarts in the target domain on a cross-domain click", () => {
    const t = applyToiClick(2, PAIR, [toi("B", "b03")], toi("A", "a07"));
    expect(t).toEqual({ kind: "select", tois: [toi("A", "a07")], targets: ["B"] });
  });

  it("rejects unknown domains", () => {
    expect(() => applyToiClick(2, PAIR, [], toi("Z", "z0"))).toThrow(/unknown domain 'Z'/);
  });
});

describe("applyToiClick on a triple model", () => {
  it("targets both free domains with a single anchor", () => {
    const t = applyToiClick(3, TRIPLE, [], toi("A", "a00"));
    expect(t).toEqual({ kind: "select", tois: [toi("A", "a00")], targets: ["B", "C"] });
  });

  it("adds a second anchor in a distinct domain", () => {
    const t = applyToiClick(3, TRIPLE, [toi("A", "a00")], toi("B", "b00"));
    expect(t).toEqual({
      kind: "select",
      tois: [toi("A", "a00"), toi("B", "b00")],
      targets: ["C"],
    });
  });

  it("caps the selection at two anchors: a target-domain click restarts", () => {
    const t = applyToiClick(3, TRIPLE, [toi("A", "a00"), toi("B", "b00")], toi("C", "c4"));
    expect(t).toEqual({ kind: "select", tois: [toi("C", "c4")], targets: ["A", "B"] });
  });

  it("moves an anchor within its own domain, keeping the other", () => {
    const t = applyToiClick(3, TRIPLE, [toi("A", "a00"), toi("B", "b00")], toi("B", "b07"));
    expect(t).toEqual({
      kind: "select",
      tois: [toi("A", "a00"), toi("B", "b07")],
      targets: ["C"],
    });
  });

  it("clears one of two anchors back to a single-anchor view", () => {
    const t = applyToiClick(3, TRIPLE, [toi("A", "a00"), toi("B", "b00")], toi("A", "a00"));
    expect(t).toEqual({ kind: "cleared", tois: [toi("B", "b00")], targets: ["A", "C"] });
  });
});

describe("queriesFor", () => {
  it("orders given anchors by model domain order, not click order", () => {
    const queries = queriesFor(TRIPLE, [toi("B", "b00"), toi("A", "a00")], ["C"], 32, 10);
    expect(queries).toEqual([
      {
        given: [
          ["A", "a00"],
          ["B", "b00"],
        ],
        target_domain: "C",
        grid_resolution: 32,
        top_k: 10,
      },
    ]);
  });

  it("emits one document per target domain", () => {
    const queries = queriesFor(TRIPLE, [toi("A", "a00")], ["B", "C"], 64, 5);
    expect(queries.map((q) => q.target_domain)).toEqual(["B", "C"]);
    for (const q of queries) {
      expect(q.given).toEqual([["A", "a00"]]);
      expect(q.grid_resolution).toBe(64);
      expect(q.top_k).toBe(5);
    }
  });
});

describe("selection labels and snapshots", () => {
  it("labels selections in model order", () => {
    expect(selectionLabel(PAIR, [toi("B", "b03")])).toBe("B:b03");
    expect(selectionLabel(TRIPLE, [toi("B", "b00"), toi("A", "a00")])).toBe("A:a00 + B:b00");
  });

  it("snapshots deeply enough that later mutation cannot leak back", () => {
    const state = emptyViewState();
    state.meta = {
      model_hash: "h",
      order: 2,
      use_c: false,
      domains: [
        { name: "A", size: 1, dims: 2, projection: "full" },
        { name: "B", size: 1, dims: 2, projection: "full" },
      ],
    };
    state.tois = [toi("B", "b03")];
    state.viewports = { A: { centerX: 1, centerY: 2, scale: 3 } };
    const snap = snapshotView(state);
    state.tois[0]!.item = "b99";
    state.viewports["A"]!.centerX = 42;
    expect(snap.modelHash).toBe("h");
    expect(snap.tois).toEqual([toi("B", "b03")]);
    expect(snap.viewports["A"]).toEqual({ centerX: 1, centerY: 2, scale: 3 });
  });
});
