/** Periodic refresh loop. */

export const DEFAULT_INTERVAL_MS = 30_000;

export interface Poller {
  stop(): void;
}

/**
 * Runs `tick` immediately and then every `intervalMs`. A tick still in
 * flight when the timer fires is not overlapped; that beat is skipped.
 */
export function startPolling(tick: () => Promise<void>, intervalMs: number = DEFAULT_INTERVAL_MS): Poller {
  let busy = false;
  const run = (): void => {
    if (busy) return;
    busy = true;
    void tick().finally(() => {
      busy = false;
    });
  };
  run();
  const handle = setInterval(run, intervalMs);
  return {
    stop(): void {
      clearInterval(handle);
    },
  };
}
