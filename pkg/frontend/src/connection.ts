// WebSocket wrapper: handshake, auto-reconnect with backoff, outbound queue of
// the latest conditioning request while offline.

import { ClientMessage, encodeMessage, parseMessage, PROTOCOL_VERSION, ServerMessage } from './protocol.js';

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  readyState: number;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHandlers {
  onMessage: (msg: ServerMessage) => void;
  onStatus: (status: 'connecting' | 'connected' | 'reconnecting' | 'incompatible') => void;
}

const BACKOFF_MS = [500, 1000, 2000, 4000, 8000];

export class CockpitSocket {
  private ws: SocketLike | null = null;
  private attempts = 0;
  private closed = false;
  private pendingLatest: ClientMessage | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: ConnectionHandlers,
    private readonly factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    this.closed = false;
    this.handlers.onStatus(this.attempts === 0 ? 'connecting' : 'reconnecting');
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.handlers.onStatus('connected');
      if (this.pendingLatest) {
        ws.send(encodeMessage(this.pendingLatest));
        this.pendingLatest = null;
      }
    };
    ws.onmessage = (ev) => {
      const msg = parseMessage(ev.data);
      if (!msg) return;
      if (msg.type === 'hello' && msg.protocol_version !== PROTOCOL_VERSION) {
        this.handlers.onStatus('incompatible');
        this.closed = true;
        ws.close();
        return;
      }
      this.handlers.onMessage(msg);
    };
    ws.onclose = () => {
      if (this.closed) return;
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    this.handlers.onStatus('reconnecting');
    const wait = BACKOFF_MS[Math.min(this.attempts, BACKOFF_MS.length - 1)];
    this.attempts += 1;
    this.timer = setTimeout(() => this.connect(), wait);
  }

  /** Send now if open; otherwise keep only the newest message for reconnection. */
  send(msg: ClientMessage): void {
    if (this.ws && this.ws.readyState === 1) {
      this.ws.send(encodeMessage(msg));
    } else {
      this.pendingLatest = msg;
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.ws?.close();
  }
}
