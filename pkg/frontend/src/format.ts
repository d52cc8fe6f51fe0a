/** Percentage formatting is the one numeric operation the client performs;
 * the values themselves always come from the service. */

export function formatPct(value: number): string {
  return value.toFixed(2);
}

export function formatProgress(fraction: number): string {
  return `${Math.round(fraction * 100)}%`;
}

export function traceLine(vlmCalls: number, llmCalls: number): string {
  return `${vlmCalls} VLM / ${llmCalls} LLM calls`;
}
