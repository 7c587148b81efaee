/**
 * Debounced latest-wins preview requests.
 *
 * Slider drags fire many state changes; the manager coalesces them with a
 * 150 ms debounce and keeps at most one request in flight. Every request
 * bumps a sequence number and responses carry the number they were issued
 * under, so a response that lands after the user has already asked for
 * something newer is discarded instead of flashing an outdated preview.
 */

export interface PreviewDeps {
  /** POSTs a script body, resolves to PNG bytes. */
  send: (script: string) => Promise<Uint8Array>;
  onImage: (bytes: Uint8Array, script: string) => void;
  onError: (err: unknown, script: string) => void;
  debounceMs?: number;
}

export class PreviewManager {
  private readonly debounceMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private seq = 0;
  private latestWanted: string | null = null;
  private inFlight = false;

  constructor(private readonly deps: PreviewDeps) {
    this.debounceMs = deps.debounceMs ?? 150;
  }

  /** Ask for a preview of `script`; earlier unsent requests are dropped. */
  request(script: string): void {
    this.latestWanted = script;
    this.seq++;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, this.debounceMs);
  }

  /** Bypass the debounce (initial load, explicit refresh). */
  requestNow(script: string): void {
    this.latestWanted = script;
    this.seq++;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.fire();
  }

  private fire(): void {
    if (this.inFlight || this.latestWanted === null) return;
    const script = this.latestWanted;
    const seq = this.seq;
    this.latestWanted = null;
    this.inFlight = true;
    this.deps.send(script).then(
      (bytes) => {
        this.inFlight = false;
        if (seq === this.seq) this.deps.onImage(bytes, script);
        this.fire(); // serve anything requested while we were busy
      },
      (err) => {
        this.inFlight = false;
        if (seq === this.seq) this.deps.onError(err, script);
        this.fire();
      },
    );
  }
}
