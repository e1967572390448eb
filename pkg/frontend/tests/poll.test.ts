import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { DEFAULT_INTERVAL_MS, startPolling } from "../src/poll.js";

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("startPolling", () => {
  it("ticks immediately and then on every interval", async () => {
    const tick = vi.fn(async () => {});

    const poller = startPolling(tick, 30_000);
    expect(tick).toHaveBeenCalledTimes(1);

    await vi.advanceTimersByTimeAsync(30_000);
    expect(tick).toHaveBeenCalledTimes(2);
    await vi.advanceTimersByTimeAsync(60_000);
    expect(tick).toHaveBeenCalledTimes(4);
    poller.stop();
  });

  it("defaults to a 30 second beat", async () => {
    const tick = vi.fn(async () => {});

    const poller = startPolling(tick);
    await vi.advanceTimersByTimeAsync(DEFAULT_INTERVAL_MS - 1);
    expect(tick).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(tick).toHaveBeenCalledTimes(2);
    poller.stop();
  });

  it("skips a beat instead of overlapping a slow tick", async () => {
    let release: () => void = () => {};
    let calls = 0;
    const tick = vi.fn(() => {
      calls += 1;
      if (calls === 1) {
        return new Promise<void>((resolve) => {
          release = resolve;
        });
      }
      return Promise.resolve();
    });

    const poller = startPolling(tick, 30_000);
    expect(tick).toHaveBeenCalledTimes(1);

    // first tick still running: two beats pass without a second call
    await vi.advanceTimersByTimeAsync(60_000);
    expect(tick).toHaveBeenCalledTimes(1);

    release();
    await vi.advanceTimersByTimeAsync(30_000);
    expect(tick).toHaveBeenCalledTimes(2);
    poller.stop();
  });

  it("stops cleanly", async () => {
    const tick = vi.fn(async () => {});

    const poller = startPolling(tick, 30_000);
    poller.stop();
    await vi.advanceTimersByTimeAsync(300_000);

    expect(tick).toHaveBeenCalledTimes(1);
  });
});
