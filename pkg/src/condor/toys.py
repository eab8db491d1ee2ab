"""Tiny benchmark environments for trainer smoke tests."""

import numpy as np

from . import _kernels
from .dynamics import BodyrateGains, QuadParams, QuadState
from .env import EnvConfig, squash_action


class PointMassEnv:
    """1-D double integrator; reward peaks when parked at the origin."""

    obs_dim = 2
    cond_dim = 1
    act_dim = 1

    def __init__(self, seed: int = 0, horizon: int = 60, dt: float = 0.1):
        self.rng = np.random.default_rng(seed)
        self.horizon = horizon
        self.dt = dt
        self.x = 0.0
        self.v = 0.0
        self.steps = 0

    def _obs(self):
        return np.array([self.x, self.v]), np.array([0.0])

    def reset_vec(self):
        self.x = float(self.rng.uniform(-4.0, 4.0))
        self.v = 0.0
        self.steps = 0
        return self._obs()

    def step_vec(self, action):
        a = float(np.tanh(np.asarray(action).reshape(-1)[0]))
        self.v += a * self.dt
        self.x += self.v * self.dt
        self.steps += 1
        reward = float(np.exp(-(1.5 * self.x) ** 2) - 0.01 * a * a)
        done = self.steps >= self.horizon
        return self._obs(), reward, done, {}


class HoverEnv:
    """Hold a quadrotor near a fixed point with CTBR actions."""

    obs_dim = 15
    cond_dim = 1
    act_dim = 4

    def __init__(self, seed: int = 0, duration: float = 5.0,
                 target=(0.0, 0.0, 1.5), start_jitter: float = 0.3):
        self.rng = np.random.default_rng(seed)
        self.params = QuadParams()
        self.gains = BodyrateGains()
        self.cfg = EnvConfig(timeout=duration, action_bodyrate_max=4.0)
        self.target = np.array(target, dtype=np.float64)
        self.start_jitter = start_jitter
        self.state: QuadState | None = None
        self.t = 0.0

    def _obs(self):
        x = self.state.as_vector()
        qw, qx, qy, qz = x[3:7]
        rot = np.array([
            [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
            [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
            [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
        ])
        core = np.concatenate([(x[0:3] - self.target), rot.reshape(9), rot.T @ x[7:10] / 5.0])
        return core, np.array([0.0])

    def reset_vec(self, canonical: bool = False):
        self.state = QuadState.hover(self.params, p=self.target)
        if not canonical:
            self.state.p = self.state.p + self.rng.uniform(-self.start_jitter, self.start_jitter, 3)
            self.state.v = self.state.v + self.rng.uniform(-0.3, 0.3, 3)
        self.t = 0.0
        return self._obs()

    def step_vec(self, action):
        cmd = squash_action(action, self.params, self.cfg)
        scal, rpos, spin, res = self.params.packed()
        states = _kernels.control_step(self.state.as_vector(), cmd.c, cmd.omega_ref,
                                       self.cfg.physics_dt, self.cfg.substeps, scal, rpos, spin,
                                       res, self.gains.kp, self.params.mixer_inv,
                                       self.params.f_motor_max)
        self.state = QuadState.from_vector(states[-1])
        self.t += self.cfg.control_dt
        err = float(np.linalg.norm(self.state.p - self.target))
        fly_away = err > 3.0
        reward = float(np.exp(-err * err) - 0.001 * np.dot(self.state.omega, self.state.omega))
        if fly_away:
            reward -= 5.0
        done = fly_away or self.t >= self.cfg.timeout - 1e-12
        return self._obs(), reward, done, {"err": err}
