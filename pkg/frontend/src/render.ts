/** Pure HTML-string renderers. Every metric cell is the verbatim string
 * form of the corresponding service JSON field — the console never
 * recomputes, rounds, or re-derives a number. */

import type { HealthResponse, ModelMetadata, WhatIfReport } from "./api.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Verbatim display form of a JSON field value. */
export function verbatim(value: unknown): string {
  if (value === null || value === undefined) return "n/a";
  return String(value);
}

const METRIC_FIELDS: ReadonlyArray<[keyof WhatIfReport, string]> = [
  ["n_pairs", "matched pairs"],
  ["mean_delta_pred_ms", "mean predicted Δ (ms)"],
  ["median_delta_pred_ms", "median predicted Δ (ms)"],
  ["p95_abs_delta_ms", "P95 |Δ| (ms)"],
  ["mean_delta_true_ms", "mean observed Δ (ms)"],
  ["mae_delta_ms", "MAEΔ (ms)"],
  ["sign_agreement", "sign agreement"],
  ["sensitivity", "sensitivity"],
  ["deployment_grade", "deployment grade"],
];

export function renderReport(report: WhatIfReport): string {
  const rows = METRIC_FIELDS.map(
    ([field, label]) =>
      `<tr><th>${escapeHtml(label)}</th>` +
      `<td data-field="${String(field)}">${escapeHtml(verbatim(report[field]))}</td></tr>`,
  ).join("");
  const caveat = report.degenerate
    ? `<p class="caveat">every matched pair was tied; trust metrics are undefined</p>`
    : "";
  return (
    `<section class="report">` +
    `<h2>${escapeHtml(verbatim(report.action))}: ` +
    `${escapeHtml(verbatim(report.from_regime))} → ` +
    `${escapeHtml(verbatim(report.to_regime))}</h2>` +
    `<table>${rows}</table>${caveat}</section>`
  );
}

export function renderModelOptions(models: ModelMetadata[]): string {
  return models
    .map(
      (m) =>
        `<option value="${escapeHtml(m.model_id)}">` +
        `${escapeHtml(m.model_id)} (${escapeHtml(m.kind)})</option>`,
    )
    .join("");
}

export function renderActionOptions(actions: string[]): string {
  return actions
    .map((a) => `<option value="${escapeHtml(a)}">${escapeHtml(a)}</option>`)
    .join("");
}

export function renderHealth(health: HealthResponse): string {
  return (
    `service ${escapeHtml(verbatim(health.status))} · ` +
    `${escapeHtml(verbatim(health.records))} records`
  );
}

export function renderError(message: string): string {
  return `<p class="error">${escapeHtml(message)}</p>`;
}
