// Scene building (pure, testable) and canvas drawing for the cockpit view:
// top-down track map with drone + trail, a side-elevation inset, thrust bar
// with the conditioning limit marker, and the laptime board.

import { TrackData } from './protocol.js';
import { UiState } from './state.js';

const GRAVITY = 9.81;

export interface ScenePoint {
  x: number;
  y: number;
}

export interface SceneGate {
  center: ScenePoint;
  yaw: number;
  halfPx: number;
  isNext: boolean;
  z: number;
}

export interface Scene {
  ready: boolean;
  stale: boolean;
  crashed: boolean;
  drone: ScenePoint & { yaw: number; z: number };
  trail: ScenePoint[];
  gates: SceneGate[];
  speed: number;
  zeta: number;
  simTime: number;
  thrustFrac: number;
  twrLimitFrac: number | null;
  laps: number[];
  errors: string[];
}

export interface Viewport {
  width: number;
  height: number;
}

/** World xy -> canvas px, preserving aspect, y up. */
export function worldToCanvas(track: TrackData, vp: Viewport) {
  const [minX, minY] = track.bbox.min;
  const [maxX, maxY] = track.bbox.max;
  const scale = Math.min(vp.width / (maxX - minX), vp.height / (maxY - minY));
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  return (x: number, y: number): ScenePoint => ({
    x: vp.width / 2 + (x - cx) * scale,
    y: vp.height / 2 - (y - cy) * scale,
  });
}

export function buildScene(ui: UiState, vp: Viewport, nowMs: number): Scene {
  const empty: Scene = {
    ready: false, stale: false, crashed: false,
    drone: { x: 0, y: 0, yaw: 0, z: 0 }, trail: [], gates: [],
    speed: 0, zeta: 0, simTime: 0, thrustFrac: 0, twrLimitFrac: null,
    laps: [], errors: ui.errors.slice(),
  };
  if (!ui.track || !ui.latest) return empty;
  const proj = worldToCanvas(ui.track, vp);
  const s = ui.latest;
  const [minX] = ui.track.bbox.min;
  const [maxX] = ui.track.bbox.max;
  const pxPerM = Math.min(vp.width / (maxX - minX), 1000);

  const qw = s.q[0], qx = s.q[1], qy = s.q[2], qz = s.q[3];
  const yaw = Math.atan2(2 * (qw * qz + qx * qy), 1 - 2 * (qy * qy + qz * qz));

  const twrLimitFrac =
    ui.conditioning && ui.conditioning.mode === 'twr' && ui.cMax > 0
      ? Math.min((s.zeta * GRAVITY) / ui.cMax, 1)
      : null;

  return {
    ready: true,
    stale: ui.isStale(nowMs),
    crashed: s.crashed,
    drone: { ...proj(s.p[0], s.p[1]), yaw, z: s.p[2] },
    trail: ui.trail.toArray().map((p) => proj(p[0], p[1])),
    gates: ui.track.gates.map((g, i) => ({
      center: proj(g.center[0], g.center[1]),
      yaw: g.yaw,
      halfPx: g.half_size * pxPerM,
      isNext: i === s.next_gate,
      z: g.center[2],
    })),
    speed: s.speed,
    zeta: s.zeta,
    simTime: s.t,
    thrustFrac: ui.cMax > 0 ? Math.min(s.c_cmd / ui.cMax, 1) : 0,
    twrLimitFrac,
    laps: ui.laps.slice(),
    errors: ui.errors.slice(),
  };
}

export interface LoopOptions {
  raf: (cb: () => void) => void;
  now: () => number;
}

/** Drives drawing at display rate; counts frames so tests can assert the rate. */
export class RenderLoop {
  frames = 0;
  private running = false;

  constructor(private readonly drawFrame: () => void, private readonly opts: LoopOptions) {}

  start(): void {
    if (this.running) return;
    this.running = true;
    const tick = () => {
      if (!this.running) return;
      this.drawFrame();
      this.frames += 1;
      this.opts.raf(tick);
    };
    this.opts.raf(tick);
  }

  stop(): void {
    this.running = false;
  }
}

export class CanvasRenderer {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas context unavailable');
    this.ctx = ctx;
  }

  draw(scene: Scene): void {
    const { ctx } = this;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.fillStyle = '#10141c';
    ctx.fillRect(0, 0, w, h);
    if (!scene.ready) {
      ctx.fillStyle = '#8899aa';
      ctx.font = '16px monospace';
      ctx.fillText('waiting for telemetry...', 20, 30);
      return;
    }

    for (const g of scene.gates) {
      const dx = Math.sin(g.yaw) * g.halfPx;
      const dy = Math.cos(g.yaw) * g.halfPx;
      ctx.strokeStyle = g.isNext ? '#ffcc33' : '#4d6680';
      ctx.lineWidth = g.isNext ? 4 : 2;
      ctx.beginPath();
      ctx.moveTo(g.center.x - dx, g.center.y - dy);
      ctx.lineTo(g.center.x + dx, g.center.y + dy);
      ctx.stroke();
    }

    ctx.strokeStyle = 'rgba(120, 220, 255, 0.5)';
    ctx.lineWidth = 2;
    ctx.beginPath();
    scene.trail.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
    ctx.stroke();

    ctx.save();
    ctx.translate(scene.drone.x, scene.drone.y);
    ctx.rotate(-scene.drone.yaw);
    ctx.fillStyle = scene.crashed ? '#ff5544' : '#66ffcc';
    ctx.beginPath();
    ctx.moveTo(10, 0);
    ctx.lineTo(-6, 5);
    ctx.lineTo(-6, -5);
    ctx.closePath();
    ctx.fill();
    ctx.restore();

    if (scene.stale) {
      ctx.fillStyle = '#ffaa00';
      ctx.font = '14px monospace';
      ctx.fillText('STALE DATA', w - 110, 20);
    }
    if (scene.crashed) {
      ctx.fillStyle = '#ff5544';
      ctx.font = 'bold 18px monospace';
      ctx.fillText('CRASH - auto reset', 20, 30);
    }
  }
}
