/** Job polling: 2s interval backing off to 10s; generation takes tens of seconds. */

import type { ApiClient, GenerationJob } from "./api.js";

export const INITIAL_POLL_MS = 2000;
export const MAX_POLL_MS = 10000;
export const BACKOFF_FACTOR = 1.5;

export function nextInterval(current: number): number {
  return Math.min(Math.round(current * BACKOFF_FACTOR), MAX_POLL_MS);
}

export async function pollJob(
  api: ApiClient,
  jobId: string,
  opts: {
    onTick?: (job: GenerationJob) => void;
    sleep?: (ms: number) => Promise<void>;
    initialMs?: number;
    timeoutMs?: number;
  } = {},
): Promise<GenerationJob> {
  const sleep = opts.sleep ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
  const deadline = Date.now() + (opts.timeoutMs ?? 300_000);
  let interval = opts.initialMs ?? INITIAL_POLL_MS;
  for (;;) {
    const job = await api.getJob(jobId);
    opts.onTick?.(job);
    if (job.status === "done" || job.status === "failed") return job;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await sleep(interval);
    interval = nextInterval(interval);
  }
}
