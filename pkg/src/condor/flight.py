"""Scheduled closed-loop flight shared by the offline `simulate` command and
the live server, so both produce identical trajectories for the same
conditioning schedule."""

from dataclasses import dataclass

import numpy as np

from . import net
from .env import RaceEnv
from .evaluation import conditioning_from_meta, env_config_from_meta, quad_params_from_meta
from .track import TrackSpec

TRAJECTORY_COLUMNS = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz",
                      "vx", "vy", "vz", "zeta", "gate_idx"]

CRASH_HOLD_S = 1.0  # sim-time hold on the crash state before the automatic reset


@dataclass
class FlightRow:
    t: float
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    zeta: float
    next_gate: int
    speed: float
    c_cmd: float
    reward: dict
    last_laptime: float | None
    crashed: bool

    def csv_values(self) -> list:
        return [self.t, self.p[0], self.p[1], self.p[2], self.q[0], self.q[1], self.q[2],
                self.q[3], self.v[0], self.v[1], self.v[2], self.zeta, self.next_gate]


class ScheduledFlight:
    """Mean-action policy flight; conditioning updates keyed on sim time take
    effect at the next control step. Crashes hold for 1 s of sim time, then
    reset at the start gate."""

    def __init__(self, checkpoint, track: TrackSpec, zeta: float,
                 schedule: list | None = None, stochastic: bool = False, seed: int = 0):
        if isinstance(checkpoint, str):
            checkpoint = net.load_checkpoint_file(checkpoint)
        self.spec, self.weights, self.meta = checkpoint
        self.cond = conditioning_from_meta(self.meta)
        quad = quad_params_from_meta(self.meta)
        cfg = env_config_from_meta(self.meta, timeout=float("inf"))
        self.env = RaceEnv(quad, track, self.cond, cfg=cfg, seed=seed)
        self.track = track
        self.stochastic = stochastic
        self.schedule = sorted(schedule or [], key=lambda e: e[0])
        self._sched_i = 0
        self.sim_t = 0.0
        self.last_laptime: float | None = None
        self._last_start_pass: float | None = None
        self._crash_hold_until: float | None = None
        self.env.reset(zeta=self.cond.clamp(zeta), gate_index=track.start_gate_index,
                       canonical=True)

    @property
    def control_dt(self) -> float:
        return self.env.cfg.control_dt

    def set_zeta(self, value: float) -> float:
        return self.env.set_zeta(value)

    def reset(self) -> None:
        zeta = self.env.state.zeta
        self.env.reset(zeta=zeta, gate_index=self.track.start_gate_index, canonical=True)
        self._last_start_pass = None
        self._crash_hold_until = None

    def step(self) -> FlightRow:
        while self._sched_i < len(self.schedule) and self.schedule[self._sched_i][0] <= self.sim_t + 1e-12:
            self.env.set_zeta(float(self.schedule[self._sched_i][1]))
            self._sched_i += 1

        if self._crash_hold_until is not None:
            self.sim_t += self.control_dt
            if self.sim_t >= self._crash_hold_until - 1e-12:
                self.reset()
            return self._row(reward=None, c_cmd=0.0, crashed=self._crash_hold_until is not None)

        obs = self.env.observation()
        dist = net.policy_forward(self.spec, self.weights,
                                  obs.core_vector(self.env.cfg), obs.zeta_enc)
        action = dist.sample(self.env.rng) if self.stochastic else dist.mean
        _obs, reward, done, info = self.env.step(action)
        self.sim_t += self.control_dt

        for g, t_pass in zip(info["gates_passed"], info["pass_times"]):
            if g == self.track.start_gate_index:
                if self._last_start_pass is not None:
                    self.last_laptime = t_pass - self._last_start_pass
                self._last_start_pass = t_pass
        crashed = bool(info["crash"])
        if crashed:
            self._crash_hold_until = self.sim_t + CRASH_HOLD_S
        reward_dict = {"prog": reward.prog, "perc": reward.perc, "twr": reward.twr,
                       "crash": reward.crash, "total": reward.total}
        return self._row(reward=reward_dict, c_cmd=info["c_cmd"], crashed=crashed)

    def _row(self, reward, c_cmd, crashed) -> FlightRow:
        st = self.env.state
        return FlightRow(t=self.sim_t, p=st.quad.p.copy(), q=st.quad.q.copy(),
                         v=st.quad.v.copy(), omega=st.quad.omega.copy(), zeta=st.zeta,
                         next_gate=st.next_gate, speed=float(np.linalg.norm(st.quad.v)),
                         c_cmd=c_cmd, reward=reward or {}, last_laptime=self.last_laptime,
                         crashed=crashed)


def simulate_trajectory(checkpoint, track: TrackSpec, zeta: float, duration: float,
                        schedule: list | None = None, stochastic: bool = False,
                        seed: int = 0) -> list[FlightRow]:
    flight = ScheduledFlight(checkpoint, track, zeta, schedule=schedule,
                             stochastic=stochastic, seed=seed)
    n = int(round(duration / flight.control_dt))
    return [flight.step() for _ in range(n)]


def trajectory_csv(rows: list[FlightRow]) -> str:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for r in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in r.csv_values()))
    return "\n".join(lines) + "\n"
