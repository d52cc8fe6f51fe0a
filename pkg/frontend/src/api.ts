/** Typed client for the table QA service. All numbers shown in the UI come
 * from these responses; the client never recomputes them. */

export interface SessionCreated {
  session_id: string;
  ocr_markdown: string;
  narration: string;
}

export interface TraceSummary {
  vlm_calls: number;
  llm_calls: number;
  stages: { stage: string; endpoint: string; digest: string }[];
}

export interface AskResult {
  answer: string;
  trace: TraceSummary;
}

export interface SessionSummary {
  session_id: string;
  resolution: string;
  has_dual: boolean;
  history: { question: string; answer: string }[];
}

export interface RunState {
  run_id: string;
  state: "pending" | "running" | "done" | "failed";
  progress: number;
  completed: number;
  total: number;
  error?: string;
}

export interface BucketEntry {
  total: number;
  correct: number;
  accuracy: number;
}

export interface Report {
  overall_accuracy: number;
  total: number;
  correct: number;
  by_strategy: Record<string, BucketEntry>;
  by_category: Record<string, BucketEntry>;
  by_config: Record<string, BucketEntry>;
  items: {
    qa_id: string;
    strategy: string;
    correct: boolean;
    matched_by: string;
    error?: string;
  }[];
  config: Record<string, unknown>;
}

export interface RunSpec {
  manifest: string;
  strategies: string[];
  limit?: number;
  categories?: string[];
  seed?: number;
  resolution?: string;
  match_mode?: string;
  fail_fast?: boolean;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let payload: any = null;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      throw new ApiError(response.status, "bad_payload", `non-JSON response: ${text.slice(0, 120)}`);
    }
    if (!response.ok) {
      const code = payload?.code ?? "http_error";
      const message = payload?.message ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, code, message);
    }
    return payload as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("GET", "/v1/healthz");
  }

  createSession(imageBase64: string, resolution?: string): Promise<SessionCreated> {
    const body: Record<string, unknown> = { image_base64: imageBase64 };
    if (resolution) body.resolution = resolution;
    return this.request("POST", "/v1/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.request("GET", `/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  ask(sessionId: string, question: string, strategy?: string): Promise<AskResult> {
    const body: Record<string, unknown> = { question };
    if (strategy) body.strategy = strategy;
    return this.request("POST", `/v1/sessions/${encodeURIComponent(sessionId)}/ask`, body);
  }

  launchRun(spec: RunSpec): Promise<{ run_id: string }> {
    return this.request("POST", "/v1/runs", spec);
  }

  getRun(runId: string): Promise<RunState> {
    return this.request("GET", `/v1/runs/${encodeURIComponent(runId)}`);
  }

  getReport(runId: string): Promise<Report> {
    return this.request("GET", `/v1/runs/${encodeURIComponent(runId)}/report`);
  }
}
