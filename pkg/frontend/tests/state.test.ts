/** Pure-state behavior: relabeling, staleness, and panel identity. */

import { describe, expect, it } from "vitest";

import {
  adjustThreshold,
  applyError,
  applyResponses,
  canRelabelLocally,
  initialState,
  labelFor,
  nextSeq,
  relabelRows,
} from "../src/state.js";
import { renderAuditStrip, renderTree, renderVerdictPanel } from "../src/panel.js";
import type { QualifyResponse, TraceResponse, VerdictRow } from "../src/types.js";

function row(criterionId: string, combined: number, threshold = 0): VerdictRow {
  return {
    criterionId,
    zText: combined / 2,
    zImage: combined / 2,
    combined,
    label: labelFor(combined, threshold),
    positivePrompt: `ideal ${criterionId}`,
    negativePrompt: `defective ${criterionId}`,
    populationBatchId: "batch-1",
  };
}

describe("relabelRows", () => {
  it("is a pure function of combined and threshold", () => {
    const rows = [row("EA1", 0.3), row("EA2", -0.2), row("EA3", 0.0)];
    const frozen = JSON.stringify(rows);
    const out = relabelRows(rows, 0.25);
    expect(JSON.stringify(rows)).toBe(frozen); // input untouched
    expect(out.map((r) => r.label)).toEqual(["positive", "negative", "negative"]);
    expect(out.map((r) => r.combined)).toEqual(rows.map((r) => r.combined));
  });

  it("labels the exact-threshold row positive", () => {
    const out = relabelRows([row("EA1", 0.5)], 0.5);
    expect(out[0].label).toBe("positive");
  });

  it("threshold below every combined labels all positive", () => {
    const rows = [row("EA1", -1.2), row("EA2", 0.4)];
    expect(relabelRows(rows, -5).every((r) => r.label === "positive")).toBe(true);
  });

  it("flips a cached positive when the slider moves past it", () => {
    const cached = [row("EA1", 0.3)];
    expect(relabelRows(cached, 0)[0].label).toBe("positive");
    expect(relabelRows(cached, 0.5)[0].label).toBe("negative");
  });
});

describe("adjustThreshold", () => {
  it("relabels locally for zscore_sum and weighted only", () => {
    expect(canRelabelLocally("zscore_sum")).toBe(true);
    expect(canRelabelLocally("weighted")).toBe(true);
    expect(canRelabelLocally("vote")).toBe(false);
  });

  it("keeps vote rows untouched (re-query required)", () => {
    let state = { ...initialState(), strategy: "vote" as const, rows: [row("EA1", 0.3)] };
    const before = state.rows;
    state = adjustThreshold(state, 2.0);
    expect(state.threshold).toBe(2.0);
    expect(state.rows).toBe(before);
  });
});

describe("request sequencing", () => {
  const response = (criterion: string, combined: number): QualifyResponse => ({
    sample_id: "Sample 1",
    criterion_id: criterion,
    delta_text: 0.1,
    delta_image: 0.1,
    z_text: combined / 2,
    z_image: combined / 2,
    combined,
    label: combined >= 0 ? "positive" : "negative",
    threshold: 0,
    config: {
      strategy: "zscore_sum",
      weights: [1, 1],
      threshold: 0,
      sigma_convention: "population",
      zscore_population: "stored_baseline",
      population_batch_id: "batch-1",
    },
    prompts: { positive: "p", negative: "n", variant: "plain" },
    nearest_positive: null,
    nearest_negative: null,
    warnings: [],
    kb_snapshot_id: "r9",
  });

  it("discards stale responses", () => {
    let state = initialState();
    let older: number, newer: number;
    [state, older] = nextSeq(state);
    [state, newer] = nextSeq(state);
    state = applyResponses(state, newer, "Sample 1", [response("EA1", 1.0)]);
    const rendered = state.rows;
    state = applyResponses(state, older, "Sample 1", [response("EA1", -1.0)]);
    expect(state.rows).toBe(rendered);
    expect(state.responseId).toBe(`req-${newer}`);
  });

  it("errors preserve cached rows", () => {
    let state = initialState();
    let seq: number;
    [state, seq] = nextSeq(state);
    state = applyResponses(state, seq, "Sample 1", [response("EA1", 1.0)]);
    [state, seq] = nextSeq(state);
    state = applyError(state, seq, "not_found: unknown sample id");
    expect(state.error).toContain("not_found");
    expect(state.rows).toHaveLength(1);
  });

  it("audit strip names the response and snapshot", () => {
    let state = initialState();
    let seq: number;
    [state, seq] = nextSeq(state);
    state = applyResponses(state, seq, "Sample 1", [response("EA1", 1.0)]);
    const strip = renderAuditStrip(state);
    expect(strip).toContain(`response=req-${seq}`);
    expect(strip).toContain("snapshot=r9");
  });
});

describe("renderVerdictPanel", () => {
  it("identical rows render identical panels regardless of how they were produced", () => {
    // weighted (1,1) and zscore_sum produce the same scores server-side;
    // given equal rows the panels must be byte-identical
    const zscoreRows = [row("EA1", 0.8), row("EA2", -0.3)];
    const weightedRows = [row("EA1", 0.8), row("EA2", -0.3)];
    expect(renderVerdictPanel(weightedRows, 0)).toBe(renderVerdictPanel(zscoreRows, 0));
  });

  it("shows the matched prompt for the assigned label", () => {
    const html = renderVerdictPanel([row("EA1", 0.8), row("EA2", -0.3)], 0);
    expect(html).toContain("ideal EA1");
    expect(html).toContain("defective EA2");
  });
});

describe("renderTree", () => {
  const trace: TraceResponse = {
    sample_id: "Sample 9",
    steps: [
      {
        criterion_id: "EA3",
        verdict: "fail",
        score: {
          z_text: -1,
          z_image: -1,
          combined: -2,
          label: "negative",
          threshold: 0,
          strategy: "zscore_sum",
          batch_id: "b",
        },
      },
    ],
    final: "reject",
    short_circuited: true,
    config_hash: "abc123def456",
    kb_snapshot_id: "r4",
  };

  it("marks a short-circuited gate step", () => {
    const html = renderTree(trace);
    expect(html).toContain("short-circuit");
    expect(html).toContain("final: reject");
    expect(html).toContain("abc123def456");
  });
});
