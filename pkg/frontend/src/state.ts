/** Console state and the pure transforms the UI is allowed to do locally.
 *
 * The one piece of client-side math is the threshold comparison: moving
 * the slider relabels cached rows without touching their scores and
 * without a network round-trip. That shortcut is only sound for
 * strategies whose label is a pure function of the combined score
 * (zscore_sum, weighted); the vote strategy must re-query the service.
 */

import type { Label, QualifyResponse, Strategy, VerdictRow } from "./types.js";

export interface ConsoleState {
  strategy: Strategy;
  weights: [number, number];
  threshold: number;
  criteria: string[];
  sampleId: string | null;
  rows: VerdictRow[];
  /** audit strip: where the cached rows came from */
  responseId: string | null;
  snapshotId: string | null;
  /** request sequencing; stale responses are discarded */
  latestSeq: number;
  appliedSeq: number;
  error: string | null;
}

export function initialState(): ConsoleState {
  return {
    strategy: "zscore_sum",
    weights: [1, 1],
    threshold: 0,
    criteria: ["EA3", "EA1", "EA2", "EA4", "EA5", "EA6"],
    sampleId: null,
    rows: [],
    responseId: null,
    snapshotId: null,
    latestSeq: 0,
    appliedSeq: 0,
    error: null,
  };
}

export function labelFor(combined: number, threshold: number): Label {
  return combined >= threshold ? "positive" : "negative";
}

/** Pure relabel of cached rows at a new threshold; scores untouched. */
export function relabelRows(rows: readonly VerdictRow[], threshold: number): VerdictRow[] {
  return rows.map((row) => ({ ...row, label: labelFor(row.combined, threshold) }));
}

export function canRelabelLocally(strategy: Strategy): boolean {
  return strategy === "zscore_sum" || strategy === "weighted";
}

export function adjustThreshold(state: ConsoleState, threshold: number): ConsoleState {
  if (!canRelabelLocally(state.strategy)) {
    // caller must re-query; keep cached rows and scores untouched
    return { ...state, threshold };
  }
  return { ...state, threshold, rows: relabelRows(state.rows, threshold) };
}

export function rowFromResponse(response: QualifyResponse): VerdictRow {
  return {
    criterionId: response.criterion_id,
    zText: response.z_text,
    zImage: response.z_image,
    combined: response.combined,
    label: response.label,
    positivePrompt: response.prompts.positive,
    negativePrompt: response.prompts.negative,
    populationBatchId: response.config.population_batch_id,
  };
}

export function nextSeq(state: ConsoleState): [ConsoleState, number] {
  const seq = state.latestSeq + 1;
  return [{ ...state, latestSeq: seq }, seq];
}

/** Apply a batch of qualify responses; drop it if a newer request finished first. */
export function applyResponses(
  state: ConsoleState,
  seq: number,
  sampleId: string,
  responses: QualifyResponse[],
): ConsoleState {
  if (seq < state.appliedSeq) {
    return state; // stale response: a newer one already rendered
  }
  const snapshotId = responses.length > 0 ? responses[responses.length - 1].kb_snapshot_id : null;
  return {
    ...state,
    appliedSeq: seq,
    sampleId,
    rows: responses.map(rowFromResponse),
    responseId: `req-${seq}`,
    snapshotId,
    error: null,
  };
}

export function applyError(state: ConsoleState, seq: number, message: string): ConsoleState {
  if (seq < state.appliedSeq) {
    return state;
  }
  // surface the failure verbatim; cached rows stay usable
  return { ...state, appliedSeq: seq, error: message };
}
