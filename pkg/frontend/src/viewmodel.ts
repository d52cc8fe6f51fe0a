import { AskResult, Report, RunState, SessionCreated, TraceSummary } from "./api.js";

/** Client-side mirror of server state. Representations are stored verbatim
 * and never edited; the transcript mirrors the server's history order. */

export interface ChatEntry {
  role: "user" | "assistant";
  text: string;
  strategy?: string;
  trace?: TraceSummary;
}

export interface RunRow {
  runId: string;
  state: RunState["state"];
  progress: number;
  error?: string;
}

export interface ViewState {
  session: { id: string; ocrMarkdown: string; narration: string } | null;
  transcript: ChatEntry[];
  strategy: string;
  runs: RunRow[];
}

export function initialState(): ViewState {
  return { session: null, transcript: [], strategy: "talent", runs: [] };
}

export function withSession(state: ViewState, created: SessionCreated): ViewState {
  return {
    ...state,
    session: {
      id: created.session_id,
      ocrMarkdown: created.ocr_markdown,
      narration: created.narration,
    },
    transcript: [],
  };
}

export function withQuestion(state: ViewState, question: string): ViewState {
  return { ...state, transcript: [...state.transcript, { role: "user", text: question }] };
}

export function withAnswer(state: ViewState, result: AskResult, strategy: string): ViewState {
  const entry: ChatEntry = {
    role: "assistant",
    text: result.answer,
    strategy,
    trace: result.trace,
  };
  return { ...state, transcript: [...state.transcript, entry] };
}

export function withStrategy(state: ViewState, strategy: string): ViewState {
  return { ...state, strategy };
}

/** Progress may only move forward in the UI even if a stale poll lands late. */
export function mergeRunState(state: ViewState, incoming: RunState): ViewState {
  const runs = state.runs.slice();
  const index = runs.findIndex((r) => r.runId === incoming.run_id);
  const previous = index >= 0 ? runs[index] : null;
  const row: RunRow = {
    runId: incoming.run_id,
    state: incoming.state,
    progress: Math.max(previous?.progress ?? 0, incoming.progress),
    error: incoming.error,
  };
  if (index >= 0) runs[index] = row;
  else runs.push(row);
  return { ...state, runs };
}

export interface ReportTables {
  overall: string;
  strategyRows: { strategy: string; accuracy: number; total: number }[];
  categoryRows: { category: string; accuracy: number; total: number }[];
  configRows: { label: string; accuracy: number }[];
  failures: { qaId: string; strategy: string; error: string }[];
}

export function reportTables(report: Report): ReportTables {
  return {
    overall: report.overall_accuracy.toFixed(2),
    strategyRows: Object.entries(report.by_strategy).map(([strategy, entry]) => ({
      strategy,
      accuracy: entry.accuracy,
      total: entry.total,
    })),
    categoryRows: Object.entries(report.by_category).map(([category, entry]) => ({
      category,
      accuracy: entry.accuracy,
      total: entry.total,
    })),
    configRows: Object.entries(report.by_config).map(([label, entry]) => ({
      label,
      accuracy: entry.accuracy,
    })),
    failures: report.items
      .filter((item) => item.matched_by === "error")
      .map((item) => ({
        qaId: item.qa_id,
        strategy: item.strategy,
        error: item.error ?? "item failed",
      })),
  };
}
