/**
 * Debounced latest-wins request scheduler.
 *
 * At most one request is in flight at a time. Every submit bumps a
 * sequence number; a response is delivered only if its request is still
 * the newest submission, so stale responses are discarded rather than
 * interleaved. While a request is in flight the newest superseding value
 * waits and fires as soon as the slot frees up.
 */

export interface SchedulerHooks {
  onError?: (err: unknown) => void;
  onBusy?: (busy: boolean) => void;
}

export class LatestWins<A, R> {
  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private pending: { arg: A; seq: number } | null = null;

  constructor(
    private readonly delayMs: number,
    private readonly run: (arg: A) => Promise<R>,
    private readonly deliver: (arg: A, result: R) => void,
    private readonly hooks: SchedulerHooks = {},
  ) {}

  submit(arg: A): void {
    const seq = ++this.seq;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.dispatch(arg, seq);
    }, this.delayMs);
  }

  private dispatch(arg: A, seq: number): void {
    if (seq !== this.seq) return; // superseded while debouncing
    if (this.inFlight) {
      this.pending = { arg, seq };
      return;
    }
    void this.fire(arg, seq);
  }

  private async fire(arg: A, seq: number): Promise<void> {
    this.inFlight = true;
    this.hooks.onBusy?.(true);
    try {
      const result = await this.run(arg);
      if (seq === this.seq) this.deliver(arg, result);
    } catch (err) {
      if (seq === this.seq) this.hooks.onError?.(err);
    } finally {
      this.inFlight = false;
      this.hooks.onBusy?.(false);
      const next = this.pending;
      this.pending = null;
      if (next !== null && next.seq === this.seq) void this.fire(next.arg, next.seq);
    }
  }
}
