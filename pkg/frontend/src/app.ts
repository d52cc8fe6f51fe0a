import { ApiError, ServiceClient } from "./api.js";
import { renderOcrMarkdown, escapeHtml } from "./markdown.js";
import { renderProgressBar, renderReportHtml } from "./dashboard.js";
import { pollRun } from "./polling.js";
import { traceLine } from "./format.js";
import {
  ViewState,
  initialState,
  mergeRunState,
  withAnswer,
  withQuestion,
  withSession,
  withStrategy,
} from "./viewmodel.js";

let state: ViewState = initialState();
let client: ServiceClient;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string) {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return String(err);
}

function renderPanels() {
  const ocrPanel = el<HTMLDivElement>("ocr-panel");
  const narrationPanel = el<HTMLDivElement>("narration-panel");
  if (!state.session) {
    ocrPanel.innerHTML = '<p class="placeholder">Upload a table image to begin.</p>';
    narrationPanel.innerHTML = "";
    return;
  }
  ocrPanel.innerHTML = renderOcrMarkdown(state.session.ocrMarkdown);
  narrationPanel.innerHTML = `<p>${escapeHtml(state.session.narration)}</p>`;
}

function renderTranscript() {
  const log = el<HTMLDivElement>("chat-log");
  log.innerHTML = state.transcript
    .map((entry) => {
      if (entry.role === "user") {
        return `<div class="bubble user">${escapeHtml(entry.text)}</div>`;
      }
      const trace = entry.trace
        ? `<div class="trace">${escapeHtml(entry.strategy ?? "")} · ` +
          `${traceLine(entry.trace.vlm_calls, entry.trace.llm_calls)}</div>`
        : "";
      return `<div class="bubble assistant">${escapeHtml(entry.text)}${trace}</div>`;
    })
    .join("");
  log.scrollTop = log.scrollHeight;
  el<HTMLButtonElement>("ask-button").disabled = state.session === null;
}

function renderRuns() {
  const list = el<HTMLDivElement>("runs-list");
  list.innerHTML = state.runs
    .map(
      (run) =>
        `<div class="run-row" data-run="${escapeHtml(run.runId)}">` +
        `<code>${escapeHtml(run.runId.slice(0, 8))}</code> ` +
        renderProgressBar(run.progress, run.state) +
        (run.error ? `<div class="run-error">${escapeHtml(run.error)}</div>` : "") +
        `</div>`,
    )
    .join("");
}

async function onUpload(file: File) {
  const buffer = await file.arrayBuffer();
  const bytes = new Uint8Array(buffer);
  let binary = "";
  for (const byte of bytes) binary += String.fromCharCode(byte);
  const base64 = btoa(binary);
  try {
    const created = await client.createSession(base64);
    state = withSession(state, created);
    renderPanels();
    renderTranscript();
  } catch (err) {
    toast(describeError(err));
  }
}

async function onAsk() {
  const input = el<HTMLInputElement>("question-input");
  const question = input.value.trim();
  if (!question || !state.session) return;
  const sessionId = state.session.id;
  input.value = "";
  state = withQuestion(state, question);
  renderTranscript();
  try {
    const result = await client.ask(sessionId, question, state.strategy);
    state = withAnswer(state, result, state.strategy);
  } catch (err) {
    state = withAnswer(
      state,
      { answer: `error: ${describeError(err)}`, trace: { vlm_calls: 0, llm_calls: 0, stages: [] } },
      state.strategy,
    );
  }
  renderTranscript();
}

async function onLaunchRun() {
  const manifest = el<HTMLInputElement>("run-manifest").value.trim();
  const strategies = el<HTMLInputElement>("run-strategies")
    .value.split(",")
    .map((s) => s.trim())
    .filter(Boolean);
  if (!manifest || strategies.length === 0) {
    toast("manifest and strategies are required");
    return;
  }
  try {
    const { run_id } = await client.launchRun({ manifest, strategies });
    state = mergeRunState(state, {
      run_id,
      state: "pending",
      progress: 0,
      completed: 0,
      total: 0,
    });
    renderRuns();
    const final = await pollRun(client, run_id, {
      intervalMs: 500,
      onUpdate: (runState) => {
        state = mergeRunState(state, runState);
        renderRuns();
      },
    });
    if (final.state === "done") {
      const report = await client.getReport(run_id);
      el<HTMLDivElement>("report-panel").innerHTML = renderReportHtml(report);
    } else {
      toast(`run failed: ${final.error ?? "unknown error"}`);
    }
  } catch (err) {
    toast(describeError(err));
  }
}

export function boot() {
  const baseUrl =
    new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8080";
  client = new ServiceClient(baseUrl);
  el<HTMLInputElement>("file-input").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) void onUpload(file);
  });
  el<HTMLButtonElement>("ask-button").addEventListener("click", () => void onAsk());
  el<HTMLInputElement>("question-input").addEventListener("keydown", (event) => {
    if (event.key === "Enter") void onAsk();
  });
  el<HTMLSelectElement>("strategy-select").addEventListener("change", (event) => {
    state = withStrategy(state, (event.target as HTMLSelectElement).value);
  });
  el<HTMLButtonElement>("run-button").addEventListener("click", () => void onLaunchRun());
  renderPanels();
  renderTranscript();
  renderRuns();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
