// Slider models and rate-limited conditioning sender. The server is the
// authority on the applied value: the slider snaps to whatever comes back in
// the state stream once the user lets go.

export class RateLimiter {
  private lastSent = -Infinity;
  private queued: number | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly send: (value: number) => void,
    private readonly minIntervalMs = 50, // <= 20 messages per second
    private readonly now: () => number = () => Date.now(),
  ) {}

  request(value: number): void {
    const t = this.now();
    if (t - this.lastSent >= this.minIntervalMs) {
      this.lastSent = t;
      this.send(value);
    } else {
      this.queued = value;
      if (this.timer === null) {
        const wait = this.minIntervalMs - (t - this.lastSent);
        this.timer = setTimeout(() => this.flush(), wait);
      }
    }
  }

  flush(): void {
    this.timer = null;
    if (this.queued !== null) {
      this.lastSent = this.now();
      this.send(this.queued);
      this.queued = null;
    }
  }
}

export class SliderModel {
  min = 0;
  max = 1;
  value = 0;
  /** true while a user request is in flight and unacknowledged */
  awaitingServer = false;

  constructor(private readonly onSend: (value: number) => void) {}

  setBounds(lo: number, hi: number): void {
    this.min = lo;
    this.max = hi;
    this.value = Math.min(Math.max(this.value, lo), hi);
  }

  /** User moved the slider: request the raw value, server clamps. */
  userInput(value: number): void {
    this.value = value;
    this.awaitingServer = true;
    this.onSend(value);
  }

  /** Server-acknowledged value from the state stream: always wins. */
  serverValue(value: number): void {
    this.value = value;
    this.awaitingServer = false;
  }
}
