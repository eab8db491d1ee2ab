// Cockpit bootstrap: wires the socket, state, sliders, and render loop to the DOM.

import { CockpitSocket } from './connection.js';
import { RateLimiter, SliderModel } from './controls.js';
import { buildScene, CanvasRenderer, RenderLoop } from './render.js';
import { UiState } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startCockpit(): void {
  const ui = new UiState();
  const canvas = el<HTMLCanvasElement>('view');
  const inset = el<HTMLCanvasElement>('inset');
  const renderer = new CanvasRenderer(canvas);
  const insetCtx = inset.getContext('2d')!;

  const banner = el<HTMLDivElement>('banner');
  const zetaSlider = el<HTMLInputElement>('zeta');
  const zetaLabel = el<HTMLSpanElement>('zeta-label');
  const speedLabel = el<HTMLSpanElement>('speed');
  const lapsList = el<HTMLUListElement>('laps');
  const thrustFill = el<HTMLDivElement>('thrust-fill');
  const thrustMarker = el<HTMLDivElement>('thrust-marker');

  const url = `ws://${location.host}/ws`;
  const socket = new CockpitSocket(url, {
    onMessage: (msg) => {
      ui.apply(msg, performance.now());
      if (msg.type === 'hello') {
        const c = msg.checkpoint_meta.conditioning;
        slider.setBounds(c.lo, c.hi);
        zetaSlider.min = String(c.lo);
        zetaSlider.max = String(c.hi);
        zetaSlider.step = '0.01';
      }
      if (msg.type === 'state' && !dragging) {
        slider.serverValue(msg.zeta);
        zetaSlider.value = String(msg.zeta);
      }
    },
    onStatus: (status) => {
      ui.status = status;
      banner.textContent =
        status === 'connected' ? '' :
        status === 'incompatible' ? 'protocol version mismatch - update the UI bundle' :
        `connection ${status}...`;
      banner.style.display = status === 'connected' ? 'none' : 'block';
    },
  });

  const limiter = new RateLimiter((v) => socket.send({ type: 'set_conditioning', value: v }));
  const slider = new SliderModel((v) => limiter.request(v));

  let dragging = false;
  zetaSlider.addEventListener('input', () => {
    dragging = true;
    slider.userInput(parseFloat(zetaSlider.value));
  });
  zetaSlider.addEventListener('change', () => {
    dragging = false;
  });

  el<HTMLButtonElement>('reset').addEventListener('click', () => socket.send({ type: 'reset' }));
  let paused = false;
  const pauseBtn = el<HTMLButtonElement>('pause');
  pauseBtn.addEventListener('click', () => {
    paused = !paused;
    socket.send({ type: paused ? 'pause' : 'resume' });
    pauseBtn.textContent = paused ? 'resume' : 'pause';
  });
  const scale = el<HTMLInputElement>('time-scale');
  scale.addEventListener('change', () =>
    socket.send({ type: 'set_time_scale', factor: parseFloat(scale.value) }));

  const loop = new RenderLoop(() => {
    const scene = buildScene(ui, { width: canvas.width, height: canvas.height },
      performance.now());
    renderer.draw(scene);
    drawInset();
    zetaLabel.textContent = scene.ready ? scene.zeta.toFixed(2) : '-';
    speedLabel.textContent = scene.ready
      ? `${scene.speed.toFixed(1)} m/s  (${(scene.speed * 3.6).toFixed(0)} km/h)` : '-';
    thrustFill.style.width = `${(scene.thrustFrac * 100).toFixed(1)}%`;
    if (scene.twrLimitFrac !== null) {
      thrustMarker.style.left = `${(scene.twrLimitFrac * 100).toFixed(1)}%`;
      thrustMarker.style.display = 'block';
    } else {
      thrustMarker.style.display = 'none';
    }
    lapsList.innerHTML = scene.laps.slice(-5).map(
      (lap, i) => `<li>lap ${ui.laps.length - Math.min(5, ui.laps.length) + i + 1}: ${lap.toFixed(2)} s</li>`).join('');
  }, { raf: (cb) => requestAnimationFrame(cb), now: () => performance.now() });

  function drawInset(): void {
    // side elevation: x vs altitude, conveys the vertical track structure
    const w = inset.width, h = inset.height;
    insetCtx.fillStyle = '#0b0e14';
    insetCtx.fillRect(0, 0, w, h);
    if (!ui.track || !ui.latest) return;
    const [minX, , minZ] = ui.track.bbox.min;
    const [maxX, , maxZ] = ui.track.bbox.max;
    const px = (x: number) => ((x - minX) / (maxX - minX)) * w;
    const pz = (z: number) => h - ((z - minZ) / (maxZ - minZ)) * h;
    insetCtx.strokeStyle = '#33475c';
    for (const g of ui.track.gates) {
      const gx = px(g.center[0]);
      insetCtx.beginPath();
      insetCtx.moveTo(gx, pz(g.center[2] - g.half_size));
      insetCtx.lineTo(gx, pz(g.center[2] + g.half_size));
      insetCtx.stroke();
    }
    insetCtx.fillStyle = '#66ffcc';
    insetCtx.beginPath();
    insetCtx.arc(px(ui.latest.p[0]), pz(ui.latest.p[2]), 3, 0, 2 * Math.PI);
    insetCtx.fill();
  }

  socket.connect();
  loop.start();
}

if (typeof document !== 'undefined' && document.getElementById('view')) {
  startCockpit();
}
