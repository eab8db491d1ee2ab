// Message types mirroring the live server's JSON protocol.

export const PROTOCOL_VERSION = 1;

export interface ConditioningMeta {
  mode: 'twr' | 'view';
  lo: number;
  hi: number;
  encoding: string;
  bins: number;
}

export interface HelloMessage {
  type: 'hello';
  protocol_version: number;
  checkpoint_meta: {
    conditioning: ConditioningMeta;
    track: string;
    c_max: number;
  };
}

export interface GateData {
  center: [number, number, number];
  yaw: number;
  half_size: number;
}

export interface TrackData {
  name: string;
  gates: GateData[];
  bbox: { min: [number, number, number]; max: [number, number, number] };
  start_gate_index: number;
  frame_width: number;
}

export interface TrackMessage {
  type: 'track';
  track: TrackData;
}

export interface RewardBreakdown {
  prog?: number;
  perc?: number;
  twr?: number;
  crash?: number;
  total?: number;
}

export interface StateMessage {
  type: 'state';
  t: number;
  p: [number, number, number];
  q: [number, number, number, number];
  v: [number, number, number];
  omega: [number, number, number];
  zeta: number;
  next_gate: number;
  last_laptime: number | null;
  speed: number;
  c_cmd: number;
  reward_breakdown: RewardBreakdown;
  crashed: boolean;
}

export interface ErrorMessage {
  type: 'error';
  message: string;
}

export type ServerMessage = HelloMessage | TrackMessage | StateMessage | ErrorMessage;

export interface SetConditioning {
  type: 'set_conditioning';
  mode?: string;
  value: number;
}

export type ClientMessage =
  | SetConditioning
  | { type: 'reset' }
  | { type: 'pause' }
  | { type: 'resume' }
  | { type: 'set_time_scale'; factor: number };

const SERVER_TYPES = new Set(['hello', 'track', 'state', 'error']);

/** Parse one frame; returns null for anything that is not a known message. */
export function parseMessage(text: string): ServerMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== 'object' || raw === null) return null;
  const msg = raw as { type?: unknown };
  if (typeof msg.type !== 'string' || !SERVER_TYPES.has(msg.type)) return null;
  return raw as ServerMessage;
}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
