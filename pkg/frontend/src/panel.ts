/** HTML rendering for the verdict panel, audit strip, and tree view.
 *
 * Renderers are pure string builders so they can be asserted on without
 * a DOM; main.ts assigns the output to innerHTML.
 */

import type { ConsoleState } from "./state.js";
import type { TraceResponse, VerdictRow } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number): string {
  return value.toFixed(4);
}

export function renderVerdictRow(row: VerdictRow): string {
  const cls = row.label === "positive" ? "verdict-positive" : "verdict-negative";
  const prompt = row.label === "positive" ? row.positivePrompt : row.negativePrompt;
  return (
    `<tr class="${cls}" data-criterion="${esc(row.criterionId)}">` +
    `<td>${esc(row.criterionId)}</td>` +
    `<td>${fmt(row.zText)}</td>` +
    `<td>${fmt(row.zImage)}</td>` +
    `<td>${fmt(row.combined)}</td>` +
    `<td class="label">${row.label}</td>` +
    `<td class="explanation">${esc(prompt)}</td>` +
    `</tr>`
  );
}

export function renderVerdictPanel(rows: readonly VerdictRow[], threshold: number): string {
  const body = rows.map(renderVerdictRow).join("");
  return (
    `<table class="verdicts" data-threshold="${fmt(threshold)}">` +
    `<thead><tr><th>assessment</th><th>z (text)</th><th>z (image)</th>` +
    `<th>combined</th><th>label</th><th>matched description</th></tr></thead>` +
    `<tbody>${body}</tbody></table>`
  );
}

export function renderAuditStrip(state: ConsoleState): string {
  const parts = [
    `strategy=${state.strategy}`,
    `weights=${state.weights[0]},${state.weights[1]}`,
    `threshold=${fmt(state.threshold)}`,
    `response=${state.responseId ?? "-"}`,
    `snapshot=${state.snapshotId ?? "-"}`,
  ];
  return `<div class="audit-strip">${parts.map(esc).join(" | ")}</div>`;
}

export function renderError(message: string): string {
  return `<div class="error">${esc(message)}</div>`;
}

export function renderTree(trace: TraceResponse): string {
  const steps = trace.steps
    .map((step, index) => {
      const stopped = trace.short_circuited && index === trace.steps.length - 1;
      const marker = stopped ? ` <span class="stop-marker">short-circuit</span>` : "";
      const score = step.score ? ` combined=${fmt(step.score.combined)}` : "";
      const error = step.error ? ` <span class="step-error">${esc(step.error)}</span>` : "";
      return (
        `<li class="step-${step.verdict}" data-criterion="${esc(step.criterion_id)}">` +
        `${esc(step.criterion_id)}: ${step.verdict}${score}${marker}${error}</li>`
      );
    })
    .join("");
  return (
    `<div class="tree" data-config-hash="${esc(trace.config_hash)}">` +
    `<ol>${steps}</ol>` +
    `<div class="final final-${trace.final}">final: ${trace.final}</div>` +
    `<div class="tree-config">config ${esc(trace.config_hash)}</div>` +
    `</div>`
  );
}
