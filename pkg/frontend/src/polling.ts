import { RunState, ServiceClient } from "./api.js";

export interface PollOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  backoffFactor?: number;
  timeoutMs?: number;
  onUpdate?: (state: RunState) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Poll a run until it reaches done or failed.
 *
 * Transient fetch failures back the interval off geometrically and keep
 * polling; the interval resets once the service answers again.
 */
export async function pollRun(
  client: ServiceClient,
  runId: string,
  options: PollOptions = {},
): Promise<RunState> {
  const base = options.intervalMs ?? 1000;
  const maxInterval = options.maxIntervalMs ?? 15000;
  const factor = options.backoffFactor ?? 2;
  const sleep = options.sleep ?? defaultSleep;
  const deadline = options.timeoutMs === undefined ? null : Date.now() + options.timeoutMs;

  let interval = base;
  for (;;) {
    let state: RunState | null = null;
    try {
      state = await client.getRun(runId);
      interval = base;
    } catch (err) {
      interval = Math.min(interval * factor, maxInterval);
    }
    if (state) {
      options.onUpdate?.(state);
      if (state.state === "done" || state.state === "failed") {
        return state;
      }
    }
    if (deadline !== null && Date.now() >= deadline) {
      throw new Error(`run ${runId} still ${state?.state ?? "unreachable"} after timeout`);
    }
    await sleep(interval);
  }
}
