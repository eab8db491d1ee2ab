// Client-side cockpit state: latest telemetry, bounded history, lap board.

import { ConditioningMeta, ServerMessage, StateMessage, TrackData } from './protocol.js';
import { Ring } from './ring.js';

export type ConnectionStatus = 'connecting' | 'connected' | 'reconnecting' | 'incompatible';

const HISTORY_SECONDS = 10;
const STATE_RATE_HZ = 30;

export interface TelemetryPoint {
  t: number;
  speed: number;
  thrustFrac: number; // commanded/total reward proxy not sent; derived from speed strip only
  zeta: number;
}

export class UiState {
  status: ConnectionStatus = 'connecting';
  conditioning: ConditioningMeta | null = null;
  trackName = '';
  cMax = 1;
  track: TrackData | null = null;
  latest: StateMessage | null = null;
  lastStateWallMs = 0;
  laps: number[] = [];
  errors: string[] = [];
  readonly history = new Ring<TelemetryPoint>(HISTORY_SECONDS * STATE_RATE_HZ);
  readonly trail = new Ring<[number, number, number]>(3 * STATE_RATE_HZ);

  apply(msg: ServerMessage, nowMs: number): void {
    switch (msg.type) {
      case 'hello':
        this.conditioning = msg.checkpoint_meta.conditioning;
        this.trackName = msg.checkpoint_meta.track;
        this.cMax = msg.checkpoint_meta.c_max;
        break;
      case 'track':
        this.track = msg.track;
        break;
      case 'state': {
        this.latest = msg;
        this.lastStateWallMs = nowMs;
        this.history.push({
          t: msg.t,
          speed: msg.speed,
          thrustFrac: this.cMax > 0 ? msg.c_cmd / this.cMax : 0,
          zeta: msg.zeta,
        });
        this.trail.push(msg.p);
        const lap = msg.last_laptime;
        if (lap !== null && (this.laps.length === 0 || this.laps[this.laps.length - 1] !== lap)) {
          this.laps.push(lap);
          if (this.laps.length > 10) this.laps.shift();
        }
        break;
      }
      case 'error':
        this.errors.push(msg.message);
        if (this.errors.length > 5) this.errors.shift();
        break;
    }
  }

  /** Stale when no state arrived for more than 500 ms. */
  isStale(nowMs: number): boolean {
    return this.latest !== null && nowMs - this.lastStateWallMs > 500;
  }
}
