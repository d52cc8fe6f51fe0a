import { Report } from "./api.js";
import { escapeHtml } from "./markdown.js";
import { formatPct } from "./format.js";
import { reportTables } from "./viewmodel.js";

/** HTML builders for the runs dashboard. Pure string output so they are
 * testable without a DOM; app.ts assigns the results to innerHTML. */

export function renderReportHtml(report: Report): string {
  const tables = reportTables(report);
  const parts: string[] = [];
  parts.push(
    `<p class="overall">Overall accuracy: <strong>${tables.overall}%</strong> ` +
      `(${report.correct}/${report.total})</p>`,
  );

  parts.push('<table class="report-table"><thead><tr><th>Method</th><th>Items</th><th>Accuracy (%)</th></tr></thead><tbody>');
  for (const row of tables.strategyRows) {
    parts.push(
      `<tr><td>${escapeHtml(row.strategy)}</td><td>${row.total}</td>` +
        `<td>${formatPct(row.accuracy)}</td></tr>`,
    );
  }
  parts.push("</tbody></table>");

  if (tables.categoryRows.length > 0) {
    parts.push('<table class="report-table"><thead><tr><th>Category</th><th>Items</th><th>Accuracy (%)</th></tr></thead><tbody>');
    for (const row of tables.categoryRows) {
      parts.push(
        `<tr><td>${escapeHtml(row.category)}</td><td>${row.total}</td>` +
          `<td>${formatPct(row.accuracy)}</td></tr>`,
      );
    }
    parts.push("</tbody></table>");
  }

  if (tables.configRows.length > 0) {
    parts.push('<table class="report-table"><thead><tr><th>Model Configuration</th><th>Accuracy (%)</th></tr></thead><tbody>');
    for (const row of tables.configRows) {
      parts.push(`<tr><td>${escapeHtml(row.label)}</td><td>${formatPct(row.accuracy)}</td></tr>`);
    }
    parts.push("</tbody></table>");
  }

  if (tables.failures.length > 0) {
    parts.push('<div class="failures"><h3>Item failures</h3><ul>');
    for (const failure of tables.failures) {
      parts.push(
        `<li><code>${escapeHtml(failure.qaId)}</code> (${escapeHtml(failure.strategy)}): ` +
          `${escapeHtml(failure.error)}</li>`,
      );
    }
    parts.push("</ul></div>");
  }
  return parts.join("");
}

export interface ScalingRow {
  s_v: number;
  s_l: number;
  actual: number;
  predicted: number;
}

/** Actual-vs-predicted listing for a completed scaling sweep; rendered only
 * when the caller has fit output to show. */
export function renderScalingListing(rows: ScalingRow[]): string {
  if (rows.length === 0) return "";
  const body = rows
    .map(
      (row) =>
        `<tr><td>${row.s_v}</td><td>${row.s_l}</td>` +
        `<td>${formatPct(row.actual)}</td><td>${formatPct(row.predicted)}</td></tr>`,
    )
    .join("");
  return (
    '<table class="report-table"><thead><tr><th>VLM size (B)</th><th>LLM size (B)</th>' +
    "<th>Actual</th><th>Predicted</th></tr></thead><tbody>" +
    body +
    "</tbody></table>"
  );
}

export function renderProgressBar(progress: number, state: string): string {
  const pct = Math.round(progress * 100);
  return (
    `<div class="progress" data-state="${escapeHtml(state)}">` +
    `<div class="progress-fill" style="width:${pct}%"></div>` +
    `<span>${pct}%</span></div>`
  );
}
