import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { PreviewManager } from "../src/preview.js";

interface Deferred {
  script: string;
  resolve: (bytes: Uint8Array) => void;
  reject: (err: unknown) => void;
}

function harness(debounceMs = 150) {
  const pending: Deferred[] = [];
  const images: string[] = [];
  const errors: string[] = [];
  const manager = new PreviewManager({
    send: (script) =>
      new Promise<Uint8Array>((resolve, reject) => {
        pending.push({ script, resolve, reject });
      }),
    onImage: (_bytes, script) => images.push(script),
    onError: (_err, script) => errors.push(script),
    debounceMs,
  });
  return { manager, pending, images, errors };
}

/** Drain the microtask queue so settled promises run their callbacks. */
async function settle(): Promise<void> {
  for (let i = 0; i < 10; i++) await null;
}

beforeEach(() => {
  vi.useFakeTimers();
});
afterEach(() => {
  vi.useRealTimers();
});

describe("PreviewManager", () => {
  it("coalesces a slider burst into one request for the last state", async () => {
    const h = harness();
    h.manager.request("a");
    vi.advanceTimersByTime(100);
    h.manager.request("b");
    vi.advanceTimersByTime(100);
    h.manager.request("c");
    expect(h.pending).toHaveLength(0); // debounce still open
    vi.advanceTimersByTime(150);
    expect(h.pending.map((p) => p.script)).toEqual(["c"]);
    h.pending[0].resolve(new Uint8Array([1]));
    await settle();
    expect(h.images).toEqual(["c"]);
  });

  it("keeps at most one request in flight", async () => {
    const h = harness();
    h.manager.requestNow("a");
    expect(h.pending).toHaveLength(1);
    h.manager.request("b");
    vi.advanceTimersByTime(150);
    // the debounce elapsed, but "a" is still in flight
    expect(h.pending).toHaveLength(1);
    h.pending[0].resolve(new Uint8Array([1]));
    await settle();
    expect(h.pending.map((p) => p.script)).toEqual(["a", "b"]);
  });

  it("discards a response once a newer state was requested", async () => {
    const h = harness();
    h.manager.requestNow("a");
    h.manager.request("c");
    vi.advanceTimersByTime(150);
    h.pending[0].resolve(new Uint8Array([1]));
    await settle();
    // "a" resolved after "c" was wanted, so it never reaches the screen
    expect(h.images).toEqual([]);
    expect(h.pending.map((p) => p.script)).toEqual(["a", "c"]);
    h.pending[1].resolve(new Uint8Array([2]));
    await settle();
    expect(h.images).toEqual(["c"]);
  });

  it("delivers the response when nothing newer arrived meanwhile", async () => {
    const h = harness();
    h.manager.requestNow("a");
    h.pending[0].resolve(new Uint8Array([1]));
    await settle();
    expect(h.images).toEqual(["a"]);
  });

  it("surfaces errors only for the newest request", async () => {
    const h = harness();
    h.manager.requestNow("a");
    h.pending[0].reject(new Error("boom"));
    await settle();
    expect(h.errors).toEqual(["a"]);

    h.manager.requestNow("b");
    h.manager.request("c");
    vi.advanceTimersByTime(150);
    h.pending[1].reject(new Error("boom"));
    await settle();
    // the failure belonged to a superseded state; "c" follows cleanly
    expect(h.errors).toEqual(["a"]);
    h.pending[2].resolve(new Uint8Array([2]));
    await settle();
    expect(h.images).toEqual(["c"]);
  });

  it("requestNow bypasses the debounce", () => {
    const h = harness();
    h.manager.requestNow("a");
    expect(h.pending.map((p) => p.script)).toEqual(["a"]);
  });
});
