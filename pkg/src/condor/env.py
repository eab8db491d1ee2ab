"""Drone-racing RL environment: observation building, CTBR action application
through the low-level controller, the four-term shaped reward, perturbed
gate-state resets, and episode termination."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, quat
from .conditioning import ConditioningSignal, ConditioningSpec, encode_conditioning
from .dynamics import GRAVITY, BodyrateGains, CtbrCommand, NonFiniteState, QuadParams, QuadState
from .track import TrackSpec, gate_distance


class SteppedDoneEnv(RuntimeError):
    """step() called on a finished episode."""


@dataclass(frozen=True)
class RewardParams:
    lambda1: float = 1.0
    lambda2: float = 0.02
    lambda3: float = -10.0
    lambda4: float = 1.0
    lambda5: float = 10.0
    crash_penalty: float = 5.0

    def __post_init__(self):
        ok = (self.lambda1 > 0 and self.lambda2 >= 0 and self.lambda3 < 0
              and self.lambda4 > 0 and self.lambda5 > 0)
        if not ok:
            raise ValueError("reward weights must satisfy l1>0, l2>=0, l3<0, l4>0, l5>0")


@dataclass
class RewardBreakdown:
    prog: float
    perc: float
    twr: float
    crash: float
    total: float


@dataclass(frozen=True)
class EnvConfig:
    physics_dt: float = 0.002
    substeps: int = 5
    timeout: float = 15.0
    camera_pitch: float = 0.0
    action_bodyrate_max: float = 8.0
    # thrust channel: c = (tanh(raw + bias) + 1)/2 * c_max; hover-centered by
    # default so a zero-mean policy holds altitude instead of climbing at half
    # throttle (nan = derive the bias from the hover point of the quad)
    action_thrust_bias: float = float("nan")
    pos_scale: float = 10.0
    vel_scale: float = 20.0
    reset_pos_jitter: float = 0.5
    reset_vel_jitter: float = 1.0
    reset_att_jitter_deg: float = 10.0
    canonical_speed: float = 2.0
    gate_buffer_size: int = 32

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.substeps

    def thrust_bias(self, quad_params: QuadParams) -> float:
        if not np.isnan(self.action_thrust_bias):
            return self.action_thrust_bias
        frac = 2.0 * GRAVITY / quad_params.c_max - 1.0
        return float(np.arctanh(np.clip(frac, -0.999, 0.999)))


@dataclass(eq=False)
class Observation:
    p: np.ndarray
    rotmat: np.ndarray          # 3x3, world <- body
    v_body: np.ndarray
    delta_gate: np.ndarray      # world-frame vector CoM -> next gate center
    zeta_enc: np.ndarray

    def core_vector(self, cfg: EnvConfig) -> np.ndarray:
        """Policy input without the conditioning part, fixed hand-set scales."""
        return np.concatenate([
            self.p / cfg.pos_scale,
            self.rotmat.reshape(9),
            self.v_body / cfg.vel_scale,
            self.delta_gate / cfg.pos_scale,
        ])


CORE_OBS_DIM = 18


@dataclass(eq=False)
class EnvState:
    quad: QuadState
    next_gate: int
    t: float
    zeta: float
    done: bool
    crashed: bool = False
    lap_count: int = 0
    gate_buffers: list = field(default_factory=list)  # per-gate ring buffers of 17-vectors


def build_observation(quad: QuadState, track: TrackSpec, next_gate: int,
                      zeta: ConditioningSignal) -> Observation:
    rot = quat.to_rotmat(quad.q)
    return Observation(
        p=quad.p.copy(),
        rotmat=rot,
        v_body=rot.T @ quad.v,
        delta_gate=track.gates[next_gate].center - quad.p,
        zeta_enc=encode_conditioning(zeta),
    )


def camera_error(q: np.ndarray, p: np.ndarray, target: np.ndarray,
                 view_offset: float = 0.0, camera_pitch: float = 0.0) -> float:
    """Angle (rad) between the camera optical axis and the desired viewing
    direction: toward `target`, rotated about world z by `view_offset`."""
    axis_b = np.array([np.cos(camera_pitch), 0.0, np.sin(camera_pitch)])
    axis_w = quat.to_rotmat(q) @ axis_b
    d = np.asarray(target, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    if view_offset != 0.0:
        c, s = np.cos(view_offset), np.sin(view_offset)
        d = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]])
    n = np.linalg.norm(d)
    if n < 1e-9:
        return 0.0
    return float(np.arccos(np.clip(np.dot(axis_w, d / n), -1.0, 1.0)))


def thrust_limit(zeta: float, mode: str, quad_params: QuadParams) -> float:
    """User-specified mass-normalized thrust cap c_twr; the physical max in view mode."""
    return zeta * GRAVITY if mode == "twr" else quad_params.c_max


def compute_reward(prev: EnvState, curr: EnvState, cmd: CtbrCommand, params: RewardParams,
                   quad_params: QuadParams, track: TrackSpec, cond_spec: ConditioningSpec,
                   camera_pitch: float = 0.0) -> RewardBreakdown:
    """Progress + perception - thrust-limit penalty - crash penalty.

    Progress telescopes against the gate that was "next" before the step, so
    passing a gate never creates a distance discontinuity in the reward.
    """
    d_prev = gate_distance(prev.quad.p, track, prev.next_gate)
    d_curr = gate_distance(curr.quad.p, track, prev.next_gate)
    prog = params.lambda1 * (d_prev - d_curr)

    view_offset = curr.zeta if cond_spec.mode == "view" else 0.0
    delta = camera_error(curr.quad.q, curr.quad.p, track.gates[curr.next_gate].center,
                         view_offset, camera_pitch)
    perc = params.lambda2 * np.exp(params.lambda3 * delta**4)

    c_twr = thrust_limit(curr.zeta, cond_spec.mode, quad_params)
    twr = max(params.lambda4 * np.exp(params.lambda5 * (cmd.c - c_twr) / quad_params.c_max) - 1.0, 0.0)

    crash = params.crash_penalty if curr.crashed else 0.0
    return RewardBreakdown(prog=float(prog), perc=float(perc), twr=float(twr), crash=float(crash),
                           total=float(prog + perc - twr - crash))


def squash_action(raw: np.ndarray, quad_params: QuadParams, cfg: EnvConfig) -> CtbrCommand:
    """tanh-map raw policy output onto the physical CTBR bounds."""
    raw = np.asarray(raw, dtype=np.float64)
    c = 0.5 * (np.tanh(raw[0] + cfg.thrust_bias(quad_params)) + 1.0) * quad_params.c_max
    omega_ref = np.tanh(raw[1:4]) * cfg.action_bodyrate_max
    return CtbrCommand(c=float(c), omega_ref=omega_ref)


def raw_thrust_action(c: float, quad_params: QuadParams, cfg: EnvConfig) -> float:
    """Inverse of the thrust squash (for tests and scripted commands)."""
    frac = np.clip(2.0 * c / quad_params.c_max - 1.0, -0.999999, 0.999999)
    return float(np.arctanh(frac) - cfg.thrust_bias(quad_params))


_CRASH_NAMES = {1: "gate", 2: "ground", 3: "bbox"}


class RaceEnv:
    """One agent on one track. Owns its RNG stream; no shared mutable state."""

    def __init__(self, quad_params: QuadParams, track: TrackSpec, cond_spec: ConditioningSpec,
                 reward_params: RewardParams | None = None, gains: BodyrateGains | None = None,
                 cfg: EnvConfig | None = None, seed: int = 0):
        self.quad_params = quad_params
        self.track = track
        self.cond_spec = cond_spec
        self.reward_params = reward_params or RewardParams()
        self.gains = gains or BodyrateGains()
        self.cfg = cfg or EnvConfig()
        self.rng = np.random.default_rng(seed)
        self.state: EnvState | None = None
        self._buffers = [[] for _ in range(track.n_gates)]
        self._new_passes: list = []

    @property
    def obs_dim(self) -> int:
        return CORE_OBS_DIM

    @property
    def cond_dim(self) -> int:
        return self.cond_spec.dim

    def signal(self) -> ConditioningSignal:
        return ConditioningSignal(self.cond_spec, self.state.zeta)

    def observation(self) -> Observation:
        return build_observation(self.state.quad, self.track, self.state.next_gate, self.signal())

    def _canonical_state(self, gate_index: int) -> QuadState:
        g = self.track.gates[gate_index]
        nxt = self.track.gates[(gate_index + 1) % self.track.n_gates]
        u = nxt.center - g.center
        u = u / max(np.linalg.norm(u), 1e-9)
        yaw = float(np.arctan2(u[1], u[0]))
        return QuadState(p=g.center.copy(), q=quat.from_yaw(yaw),
                         v=self.cfg.canonical_speed * u, omega=np.zeros(3),
                         motor_speeds=np.full(4, self.quad_params.hover_omega))

    def _perturbed_state(self, stored: np.ndarray) -> QuadState:
        s = QuadState.from_vector(stored)
        cfg = self.cfg
        s.p = s.p + self.rng.uniform(-cfg.reset_pos_jitter, cfg.reset_pos_jitter, 3)
        s.v = s.v + self.rng.uniform(-cfg.reset_vel_jitter, cfg.reset_vel_jitter, 3)
        a = np.deg2rad(cfg.reset_att_jitter_deg)
        r, p_, y = self.rng.uniform(-a, a, 3)
        s.q = quat.normalize(quat.multiply(s.q, quat.from_euler_xyz(r, p_, y)))
        return s

    def reset(self, zeta: float | None = None, gate_index: int | None = None,
              canonical: bool = False) -> Observation:
        """Start a new episode at a random (or given) gate.

        With a non-empty buffer for that gate, perturbs a previously observed
        passing state; otherwise uses a canonical slow pass-through state.
        """
        gate = int(self.rng.integers(self.track.n_gates)) if gate_index is None else int(gate_index)
        value = self.cond_spec.sample(self.rng) if zeta is None else float(zeta)
        buf = self._buffers[gate]
        if buf and not canonical:
            idx = int(self.rng.integers(len(buf)))
            quad_state = self._perturbed_state(buf[idx])
        else:
            quad_state = self._canonical_state(gate)
        self.state = EnvState(quad=quad_state, next_gate=(gate + 1) % self.track.n_gates,
                              t=0.0, zeta=value, done=False, crashed=False, lap_count=0,
                              gate_buffers=self._buffers)
        return self.observation()

    def set_zeta(self, value: float) -> float:
        """Mid-flight conditioning update (live steering); clamps to the trained range."""
        clamped = self.cond_spec.clamp(value)
        self.state.zeta = clamped
        return clamped

    # gate-buffer plumbing for the trainer: buffers are private to the env
    # during rollouts; the single-context update phase pools passing states so
    # every env resets from states observed by any agent
    def get_gate_buffers(self) -> list:
        return [list(b) for b in self._buffers]

    def set_gate_buffers(self, buffers: list) -> None:
        size = self.cfg.gate_buffer_size
        self._buffers = [list(b)[-size:] for b in buffers]
        if self.state is not None:
            self.state.gate_buffers = self._buffers

    def take_new_passes(self) -> list:
        """Passing states recorded since the last call (gate_index, state17)."""
        out = self._new_passes
        self._new_passes = []
        return out

    def step(self, action_raw: np.ndarray):
        st = self.state
        if st is None:
            raise RuntimeError("reset() before step()")
        if st.done:
            raise SteppedDoneEnv("episode is done; reset() first")

        cmd = squash_action(action_raw, self.quad_params, self.cfg)
        prev = EnvState(quad=st.quad.copy(), next_gate=st.next_gate, t=st.t, zeta=st.zeta,
                        done=False, gate_buffers=st.gate_buffers)

        scal, rpos, spin, res = self.quad_params.packed()
        states = _kernels.control_step(
            st.quad.as_vector(), cmd.c, cmd.omega_ref, self.cfg.physics_dt, self.cfg.substeps,
            scal, rpos, spin, res, self.gains.kp, self.quad_params.mixer_inv,
            self.quad_params.f_motor_max)
        if not np.all(np.isfinite(states)):
            raise NonFiniteState("non-finite state during env step")

        centers, cy, sy, halfs, fw, blo, bhi = self.track.packed()
        n_pass, pass_gates, pass_subs, crash_code, crash_sub, new_next = _kernels.gate_events(
            st.quad.p, states, centers, cy, sy, halfs, fw, blo, bhi, st.next_gate)

        gates_passed = []
        pass_times = []
        for i in range(n_pass):
            g = int(pass_gates[i])
            sub = int(pass_subs[i])
            gates_passed.append(g)
            pass_times.append(st.t + (sub + 1) * self.cfg.physics_dt)
            buf = self._buffers[g]
            if len(buf) >= self.cfg.gate_buffer_size:
                buf.pop(0)
            buf.append(states[sub].copy())
            self._new_passes.append((g, states[sub].copy()))
            if g == self.track.start_gate_index:
                st.lap_count += 1

        end_idx = crash_sub if crash_code else self.cfg.substeps - 1
        st.quad = QuadState.from_vector(states[end_idx])
        st.next_gate = int(new_next)
        st.t = st.t + self.cfg.control_dt
        st.crashed = crash_code != 0
        timeout = st.t >= self.cfg.timeout - 1e-12
        st.done = st.crashed or timeout

        reward = compute_reward(prev, st, cmd, self.reward_params, self.quad_params,
                                self.track, self.cond_spec, self.cfg.camera_pitch)
        obs = self.observation()
        info = {
            "gates_passed": gates_passed,
            "pass_times": pass_times,
            "crash": _CRASH_NAMES.get(crash_code),
            "lap_completed": self.track.start_gate_index in gates_passed,
            "laps": st.lap_count,
            "d_gate": float(np.linalg.norm(obs.delta_gate)),
            "c_cmd": cmd.c,
            "zeta": st.zeta,
            "timeout": bool(timeout and not st.crashed),
        }
        return obs, reward, st.done, info

    # vector interface used by the trainer
    def reset_vec(self, **kw):
        obs = self.reset(**kw)
        return obs.core_vector(self.cfg), obs.zeta_enc

    def step_vec(self, action_raw):
        obs, reward, done, info = self.step(action_raw)
        return (obs.core_vector(self.cfg), obs.zeta_enc), reward.total, done, info
