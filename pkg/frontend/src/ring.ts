// Fixed-capacity ring buffer for telemetry strips.

export class Ring<T> {
  private buf: T[] = [];
  private head = 0;

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error('ring capacity must be >= 1');
  }

  push(item: T): void {
    if (this.buf.length < this.capacity) {
      this.buf.push(item);
    } else {
      this.buf[this.head] = item;
      this.head = (this.head + 1) % this.capacity;
    }
  }

  get length(): number {
    return this.buf.length;
  }

  /** Oldest-first snapshot. */
  toArray(): T[] {
    return this.buf.slice(this.head).concat(this.buf.slice(0, this.head));
  }

  last(): T | undefined {
    if (this.buf.length === 0) return undefined;
    const i = (this.head + this.buf.length - 1) % this.buf.length;
    return this.buf[i];
  }

  clear(): void {
    this.buf = [];
    this.head = 0;
  }
}
