/** Browser wiring: slider, strategy picker, sample form, tree view. */

import { ApiClient, ServiceError } from "./api.js";
import {
  adjustThreshold,
  applyError,
  applyResponses,
  canRelabelLocally,
  initialState,
  nextSeq,
  type ConsoleState,
} from "./state.js";
import { renderAuditStrip, renderError, renderTree, renderVerdictPanel } from "./panel.js";
import type { QualifyResponse, Strategy } from "./types.js";

const SERVICE_URL =
  (globalThis as { MICROQUAL_SERVICE_URL?: string }).MICROQUAL_SERVICE_URL ??
  "http://127.0.0.1:8077";

let state: ConsoleState = initialState();
const api = new ApiClient(SERVICE_URL);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function render(): void {
  el("panel").innerHTML = state.error
    ? renderError(state.error) + renderVerdictPanel(state.rows, state.threshold)
    : renderVerdictPanel(state.rows, state.threshold);
  el("audit").innerHTML = renderAuditStrip(state);
  el<HTMLSpanElement>("threshold-value").textContent = state.threshold.toFixed(2);
}

async function qualifySample(sampleId: string): Promise<void> {
  const [next, seq] = nextSeq(state);
  state = next;
  try {
    const responses: QualifyResponse[] = [];
    for (const criterion of state.criteria) {
      responses.push(
        await api.qualify({
          sample_id: sampleId,
          criterion_id: criterion,
          strategy: state.strategy,
          weights: state.weights,
          threshold: state.threshold,
        }),
      );
    }
    state = applyResponses(state, seq, sampleId, responses);
  } catch (err) {
    const message =
      err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err);
    state = applyError(state, seq, message);
  }
  render();
}

function onThresholdInput(value: number): void {
  if (canRelabelLocally(state.strategy)) {
    // pure view transform over cached combined scores; no network call
    state = adjustThreshold(state, value);
    render();
  } else {
    state = { ...state, threshold: value };
    if (state.sampleId) void qualifySample(state.sampleId);
  }
}

function onStrategyChange(strategy: Strategy, weights: [number, number]): void {
  state = { ...state, strategy, weights };
  if (state.sampleId) void qualifySample(state.sampleId);
}

async function showTree(sampleId: string, order: string[]): Promise<void> {
  try {
    const trace = await api.qualifyTree({ sample_id: sampleId, order });
    el("tree").innerHTML = renderTree(trace);
  } catch (err) {
    const message = err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err);
    el("tree").innerHTML = renderError(message);
  }
}

export function bootstrap(): void {
  render();
  el<HTMLFormElement>("sample-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const sampleId = el<HTMLInputElement>("sample-id").value.trim();
    if (sampleId) void qualifySample(sampleId);
  });
  el<HTMLInputElement>("threshold").addEventListener("input", (event) => {
    onThresholdInput(Number((event.target as HTMLInputElement).value));
  });
  el<HTMLSelectElement>("strategy").addEventListener("change", (event) => {
    const strategy = (event.target as HTMLSelectElement).value as Strategy;
    const w1 = Number(el<HTMLInputElement>("weight-text").value || "1");
    const w2 = Number(el<HTMLInputElement>("weight-image").value || "1");
    if (!Number.isFinite(w1) || !Number.isFinite(w2)) {
      state = { ...state, error: "weights must be finite numbers" };
      render();
      return;
    }
    onStrategyChange(strategy, [w1, w2]);
  });
  el<HTMLFormElement>("tree-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const sampleId = el<HTMLInputElement>("sample-id").value.trim();
    const order = el<HTMLInputElement>("tree-order")
      .value.split(",")
      .map((s) => s.trim())
      .filter(Boolean);
    if (sampleId) void showTree(sampleId, order);
  });
}

if (typeof document !== "undefined" && document.getElementById("panel")) {
  bootstrap();
}
