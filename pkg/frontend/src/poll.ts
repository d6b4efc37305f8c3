/** Repeating fetch driver for the dashboard tables.
 *
 * Fires immediately on start, then at a fixed interval. While the page is
 * hidden the interval stretches by a backoff factor so background tabs stop
 * hammering the service; the next visibilitychange to visible triggers an
 * immediate refresh.
 */

export interface PollerOptions {
  intervalMs?: number;
  hiddenBackoff?: number;
  doc?: Document;
}

export class Poller {
  private readonly intervalMs: number;
  private readonly hiddenBackoff: number;
  private readonly doc: Document;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private running = false;
  private readonly onVisibility = () => {
    if (!this.doc.hidden && this.running) {
      this.bounce();
    }
  };

  constructor(
    private readonly tick: () => void | Promise<void>,
    options: PollerOptions = {},
  ) {
    this.intervalMs = options.intervalMs ?? 2000;
    this.hiddenBackoff = options.hiddenBackoff ?? 5;
    this.doc = options.doc ?? document;
  }

  get currentInterval(): number {
    return this.doc.hidden ? this.intervalMs * this.hiddenBackoff : this.intervalMs;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.doc.addEventListener("visibilitychange", this.onVisibility);
    this.bounce();
  }

  stop(): void {
    this.running = false;
    this.doc.removeEventListener("visibilitychange", this.onVisibility);
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Run one tick now and reschedule the next from the current visibility. */
  private bounce(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    void this.tick();
    this.schedule();
  }

  private schedule(): void {
    this.timer = setTimeout(() => {
      if (!this.running) return;
      void this.tick();
      this.schedule();
    }, this.currentInterval);
  }
}
