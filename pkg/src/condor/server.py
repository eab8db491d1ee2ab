"""Real-time inference service: one sim-loop thread owns the flight; browser
clients steer the conditioning signal and watch telemetry over a WebSocket.

Protocol (JSON text frames, one message per frame):
  inbound   set_conditioning{mode?, value}, reset{}, set_time_scale{factor},
            pause{}, resume{}
  outbound  hello{protocol_version, checkpoint_meta}, track{...},
            state{t, p, q, v, omega, zeta, next_gate, last_laptime, speed,
            reward_breakdown, crashed}, error{message}
"""

import asyncio
import json
import threading
import time

from . import track as track_mod
from .flight import FlightRow, ScheduledFlight
from .track import TrackSpec

PROTOCOL_VERSION = 1
BROADCAST_HZ = 30.0


class PortInUse(OSError):
    pass


class LiveServer:
    """Owns the simulated flight; all client interaction goes through queues."""

    def __init__(self, checkpoint, track: TrackSpec, time_scale: float = 1.0,
                 stochastic: bool = False, zeta_schedule: list | None = None,
                 start_zeta: float | None = None, record_trajectory: bool = False):
        from .evaluation import conditioning_from_meta
        spec, weights, meta = checkpoint
        cond = conditioning_from_meta(meta)
        # default to the top of the trained range (most aggressive flight)
        zeta0 = start_zeta if start_zeta is not None else cond.hi
        self.flight = ScheduledFlight((spec, weights, meta), track, zeta0,
                                      schedule=zeta_schedule, stochastic=stochastic)
        self.track = track
        self.cond = cond
        self.meta = meta
        self.time_scale = float(time_scale)
        self.paused = False
        self.record_trajectory = record_trajectory
        self.trajectory_log: list[FlightRow] = []
        self.latest_row: FlightRow | None = None
        self._inbound: list[tuple[int, str]] = []
        self._clients: dict[int, tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = {}
        self._next_client = 0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # ---------------------------------------------------------- client plumbing

    def register(self, loop, queue) -> int:
        with self._lock:
            cid = self._next_client
            self._next_client += 1
            self._clients[cid] = (loop, queue)
        return cid

    def unregister(self, cid: int) -> None:
        with self._lock:
            self._clients.pop(cid, None)

    def submit(self, cid: int, text: str) -> None:
        with self._lock:
            self._inbound.append((cid, text))

    def _send_to(self, cid: int, message: dict) -> None:
        with self._lock:
            entry = self._clients.get(cid)
        if entry is None:
            return
        loop, queue = entry

        def push():
            if queue.qsize() < 64:
                queue.put_nowait(message)
        loop.call_soon_threadsafe(push)

    def _broadcast(self, message: dict) -> None:
        with self._lock:
            cids = list(self._clients)
        for cid in cids:
            self._send_to(cid, message)

    # ------------------------------------------------------------ message logic

    def handle_message(self, cid: int, text: str) -> None:
        """Decode and apply one inbound message; malformed input answers error{}."""
        try:
            msg = json.loads(text)
            kind = msg["type"]
        except (ValueError, KeyError, TypeError):
            self._send_to(cid, {"type": "error", "message": "malformed message"})
            return
        if kind == "set_conditioning":
            mode = msg.get("mode", self.cond.mode)
            if mode != self.cond.mode:
                self._send_to(cid, {"type": "error",
                                    "message": f"checkpoint conditioning mode is {self.cond.mode}"})
                return
            try:
                value = float(msg["value"])
            except (KeyError, ValueError, TypeError):
                self._send_to(cid, {"type": "error", "message": "set_conditioning needs value"})
                return
            applied = self.flight.set_zeta(value)
            if applied != value:
                self._send_to(cid, {"type": "error",
                                    "message": f"value {value} clamped to {applied}"})
        elif kind == "reset":
            self.flight.reset()
        elif kind == "set_time_scale":
            try:
                self.time_scale = min(max(float(msg["factor"]), 0.01), 200.0)
            except (KeyError, ValueError, TypeError):
                self._send_to(cid, {"type": "error", "message": "set_time_scale needs factor"})
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        else:
            self._send_to(cid, {"type": "error", "message": f"unknown message type {kind!r}"})

    def hello_message(self) -> dict:
        return {"type": "hello", "protocol_version": PROTOCOL_VERSION,
                "checkpoint_meta": {"conditioning": {
                    "mode": self.cond.mode, "lo": self.cond.lo, "hi": self.cond.hi,
                    "encoding": self.cond.encoding, "bins": self.cond.bins},
                    "track": self.meta.get("track", self.track.name),
                    "c_max": self.flight.env.quad_params.c_max}}

    def track_message(self) -> dict:
        return {"type": "track", "track": json.loads(track_mod.serialize_track(self.track))}

    def state_message(self, row: FlightRow) -> dict:
        return {"type": "state", "t": row.t, "p": list(row.p), "q": list(row.q),
                "v": list(row.v), "omega": list(row.omega), "zeta": row.zeta,
                "next_gate": row.next_gate, "last_laptime": row.last_laptime,
                "speed": row.speed, "c_cmd": row.c_cmd,
                "reward_breakdown": row.reward, "crashed": row.crashed}

    # ---------------------------------------------------------------- sim loop

    def run_steps(self, n: int) -> None:
        """Advance the flight n control steps (drains pending messages first)."""
        with self._lock:
            pending, self._inbound = self._inbound, []
        for cid, text in pending:
            self.handle_message(cid, text)
        for _ in range(n):
            row = self.flight.step()
            self.latest_row = row
            if self.record_trajectory:
                self.trajectory_log.append(row)

    def _loop(self) -> None:
        dt = self.flight.control_dt
        sim_ahead = 0.0
        last = time.monotonic()
        last_broadcast = 0.0
        while not self._stop.is_set():
            now = time.monotonic()
            wall = now - last
            last = now
            if not self.paused:
                sim_ahead += wall * self.time_scale
                n = int(sim_ahead / dt)
                if n > 0:
                    n = min(n, 2000)
                    self.run_steps(n)
                    sim_ahead -= n * dt
            else:
                self.run_steps(0)  # still drain messages while paused
                sim_ahead = 0.0
            if now - last_broadcast >= 1.0 / BROADCAST_HZ and self.latest_row is not None:
                self._broadcast(self.state_message(self.latest_row))
                last_broadcast = now
            time.sleep(0.002)

    def start(self) -> None:
        if self._thread is None:
            self._stop.clear()
            self._thread = threading.Thread(target=self._loop, daemon=True)
            self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None


FALLBACK_PAGE = """<!doctype html><html><head><title>condor live</title></head>
<body><h1>condor live server</h1>
<p>UI bundle not found. Build the cockpit with <code>cd frontend && npm run build</code>
and restart, or connect a WebSocket client to <code>/ws</code>.</p></body></html>"""


def create_app(server: LiveServer, ui_dir: str | None = None):
    import os
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import HTMLResponse

    @asynccontextmanager
    async def lifespan(app):
        server.start()
        yield
        server.stop()

    app = FastAPI(lifespan=lifespan)

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()
        cid = server.register(loop, queue)
        await websocket.send_json(server.hello_message())
        await websocket.send_json(server.track_message())

        async def sender():
            while True:
                msg = await queue.get()
                await websocket.send_text(json.dumps(msg))

        async def receiver():
            while True:
                text = await websocket.receive_text()
                server.submit(cid, text)

        try:
            done, pend = await asyncio.wait(
                [asyncio.ensure_future(sender()), asyncio.ensure_future(receiver())],
                return_when=asyncio.FIRST_EXCEPTION)
            for task in pend:
                task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            server.unregister(cid)

    if ui_dir is None:
        ui_dir = os.environ.get("CONDOR_UI_DIST", os.path.join("frontend", "dist"))
    if os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:
        @app.get("/")
        async def index():
            return HTMLResponse(FALLBACK_PAGE)
    return app


def run_server(server: LiveServer, port: int = 8700, host: str = "127.0.0.1") -> None:
    import uvicorn
    app = create_app(server)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as e:
        if "address already in use" in str(e).lower() or getattr(e, "errno", None) == 98:
            raise PortInUse(f"port {port} already in use") from e
        raise
