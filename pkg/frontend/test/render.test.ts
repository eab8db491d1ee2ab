import { describe, expect, it } from 'vitest';
import { TrackData } from '../src/protocol.js';
import { buildScene, RenderLoop, worldToCanvas } from '../src/render.js';
import { UiState } from '../src/state.js';
import { helloMsg, stateMsg } from './state.test.js';

const track: TrackData = {
  name: 'square',
  gates: [
    { center: [6, 0, 1.5], yaw: Math.PI / 2, half_size: 0.75 },
    { center: [0, 6, 1.5], yaw: Math.PI, half_size: 0.75 },
    { center: [-6, 0, 1.5], yaw: -Math.PI / 2, half_size: 0.75 },
    { center: [0, -6, 1.5], yaw: 0, half_size: 0.75 },
  ],
  bbox: { min: [-9, -9, 0], max: [9, 9, 6] },
  start_gate_index: 0,
  frame_width: 0.3,
};

function readyUi(): UiState {
  const ui = new UiState();
  ui.apply(helloMsg(), 0);
  ui.apply({ type: 'track', track }, 0);
  return ui;
}

describe('scene building', () => {
  it('projects the world box onto the canvas preserving centering', () => {
    const proj = worldToCanvas(track, { width: 720, height: 640 });
    const center = proj(0, 0);
    expect(center.x).toBeCloseTo(360);
    expect(center.y).toBeCloseTo(320);
    const right = proj(9, 0);
    expect(right.x).toBeGreaterThan(center.x);
    const up = proj(0, 9);
    expect(up.y).toBeLessThan(center.y); // y axis points up on screen
  });

  it('produces a circular trail from a synthetic circular stream', () => {
    const ui = readyUi();
    for (let i = 0; i < 60; i++) {
      const a = (2 * Math.PI * i) / 60;
      ui.apply(stateMsg(i / 30, { p: [6 * Math.cos(a), 6 * Math.sin(a), 1.5] }), i * 33);
    }
    const scene = buildScene(ui, { width: 720, height: 640 }, 60 * 33);
    expect(scene.ready).toBe(true);
    const cx = 360, cy = 320;
    const radii = scene.trail.map((p) => Math.hypot(p.x - cx, p.y - cy));
    const mean = radii.reduce((s, r) => s + r, 0) / radii.length;
    for (const r of radii) expect(Math.abs(r - mean)).toBeLessThan(1e-6);
  });

  it('marks the next gate and places the thrust limit marker', () => {
    const ui = readyUi();
    ui.apply(stateMsg(0, { next_gate: 2, zeta: 2.0, c_cmd: 20.0 }), 0);
    const scene = buildScene(ui, { width: 720, height: 640 }, 0);
    expect(scene.gates.map((g) => g.isNext)).toEqual([false, false, true, false]);
    // marker fraction = zeta * g / c_max
    expect(scene.twrLimitFrac).toBeCloseTo((2.0 * 9.81) / 44.61, 3);
    expect(scene.thrustFrac).toBeCloseTo(20.0 / 44.61, 3);
  });

  it('flags crash states for the renderer', () => {
    const ui = readyUi();
    ui.apply(stateMsg(0, { crashed: true }), 0);
    const scene = buildScene(ui, { width: 720, height: 640 }, 0);
    expect(scene.crashed).toBe(true);
  });

  it('reports stale when the stream stops', () => {
    const ui = readyUi();
    ui.apply(stateMsg(0), 1000);
    expect(buildScene(ui, { width: 720, height: 640 }, 1200).stale).toBe(false);
    expect(buildScene(ui, { width: 720, height: 640 }, 1700).stale).toBe(true);
  });
});

describe('render loop', () => {
  it('sustains 30 fps on a synthetic 30 Hz state stream', () => {
    // simulated display clock at 60 Hz for 2 s of fake time
    const frameBudgetMs = 1000 / 60;
    let fakeTime = 0;
    const pending: Array<() => void> = [];
    const raf = (cb: () => void) => pending.push(cb);

    const ui = readyUi();
    let streamIdx = 0;
    const loop = new RenderLoop(() => {
      buildScene(ui, { width: 720, height: 640 }, fakeTime);
    }, { raf, now: () => fakeTime });

    loop.start();
    const totalFrames = 120; // 2 s at 60 Hz
    for (let f = 0; f < totalFrames; f++) {
      fakeTime += frameBudgetMs;
      // synthetic 30 Hz stream feeding between frames
      while (streamIdx * (1000 / 30) <= fakeTime) {
        ui.apply(stateMsg(streamIdx / 30), fakeTime);
        streamIdx += 1;
      }
      const cb = pending.shift();
      expect(cb).toBeDefined();
      cb!();
    }
    loop.stop();
    const fps = loop.frames / 2;
    expect(fps).toBeGreaterThanOrEqual(30);
    expect(streamIdx).toBeGreaterThanOrEqual(59); // the stream really ran at 30 Hz
  });
});
