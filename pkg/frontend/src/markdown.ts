/** Markdown-table parsing and rendering for model-generated OCR output.
 *
 * VLM output is not guaranteed well-formed: rows may be ragged, the separator
 * line may be missing, and prose can surround the table. Short rows are padded
 * to the header width; extra cells are kept (the header is padded instead).
 */

export interface ParsedTable {
  header: string[];
  rows: string[][];
}

const SEPARATOR = /^\s*\|?[\s:|-]+\|?\s*$/;

function isSeparatorLine(line: string): boolean {
  return line.includes("-") && SEPARATOR.test(line);
}

function splitRow(line: string): string[] {
  let work = line.trim();
  if (work.startsWith("|")) work = work.slice(1);
  if (work.endsWith("|")) work = work.slice(0, -1);
  return work.split("|").map((cell) => cell.trim());
}

export function parseMarkdownTable(markdown: string): ParsedTable | null {
  const lines = markdown.replace(/\r\n/g, "\n").split("\n");
  const tableLines = lines.filter((l) => l.trim().startsWith("|") || l.includes("|"));
  const candidates = tableLines.filter((l) => l.trim().length > 0);
  if (candidates.length === 0) return null;

  const dataLines = candidates.filter((l) => !isSeparatorLine(l));
  if (dataLines.length === 0) return null;

  const header = splitRow(dataLines[0]);
  let rows = dataLines.slice(1).map(splitRow);

  const width = Math.max(header.length, ...rows.map((r) => r.length), 1);
  const pad = (cells: string[]) => {
    const out = cells.slice();
    while (out.length < width) out.push("");
    return out;
  };
  rows = rows.map(pad);
  return { header: pad(header), rows };
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render OCR markdown as an HTML table, falling back to <pre> when no table
 * structure is recognizable. */
export function renderOcrMarkdown(markdown: string): string {
  const parsed = parseMarkdownTable(markdown);
  if (!parsed) {
    return `<pre>${escapeHtml(markdown)}</pre>`;
  }
  const head = parsed.header.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const body = parsed.rows
    .map((row) => `<tr>${row.map((c) => `<td>${escapeHtml(c)}</td>`).join("")}</tr>`)
    .join("");
  return `<table class="ocr-table"><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>`;
}
