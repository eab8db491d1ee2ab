"""Rigid-body quadrotor model: quadratic propeller wrench, polynomial residual
wrench, first-order motors, RK4 integration, and a CTBR-tracking low-level
controller with a saturating thrust mixer.

All quantities SI. World frame z-up, body frame x-forward/y-left/z-up,
gravity [0, 0, -9.81]. Collective thrust commands are mass-normalized (m/s^2).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels, quat

GRAVITY = _kernels.GRAVITY


class NonFiniteState(RuntimeError):
    """Integration produced NaN or infinity."""


@dataclass(frozen=True, eq=False)
class ResidualCoeffs:
    """Graybox correction: f_res = -(A_lin v_B + A_quad (v_B*|v_B|)), tau_res = -B_lin omega."""

    A_lin: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    A_quad: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    B_lin: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def stacked(self) -> np.ndarray:
        return np.stack([
            np.asarray(self.A_lin, dtype=np.float64),
            np.asarray(self.A_quad, dtype=np.float64),
            np.asarray(self.B_lin, dtype=np.float64),
        ])


def _default_rotor_positions(arm_length: float = 0.125) -> np.ndarray:
    # X configuration: front-left, front-right, back-right, back-left
    d = arm_length / np.sqrt(2.0)
    return np.array([[d, d, 0.0], [d, -d, 0.0], [-d, -d, 0.0], [-d, d, 0.0]])


@dataclass(frozen=True, eq=False)
class QuadParams:
    m: float = 0.807
    inertia: np.ndarray = field(default_factory=lambda: np.array([2.5e-3, 2.1e-3, 4.3e-3]))
    k_mot: float = 0.05
    omega_max: float = 4000.0
    f_max: float = 36.0
    c_l: float = 36.0 / (4.0 * 4000.0**2)
    c_d: float = 0.01 * 36.0 / (4.0 * 4000.0**2)
    rotor_positions: np.ndarray = field(default_factory=_default_rotor_positions)
    rotor_spin_dirs: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0, 1.0, -1.0]))
    residual: ResidualCoeffs = field(default_factory=ResidualCoeffs)

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=np.float64))
        object.__setattr__(self, "rotor_positions", np.asarray(self.rotor_positions, dtype=np.float64))
        object.__setattr__(self, "rotor_spin_dirs", np.asarray(self.rotor_spin_dirs, dtype=np.float64))
        self.validate()

    def validate(self) -> None:
        problems = []
        if not self.m > 0:
            problems.append("m must be > 0")
        if not np.all(self.inertia > 0):
            problems.append("inertia entries must be > 0")
        if not self.k_mot > 0:
            problems.append("k_mot must be > 0")
        if not self.c_l > 0:
            problems.append("c_l must be > 0")
        if self.c_d < 0:
            problems.append("c_d must be >= 0")
        if abs(4.0 * self.c_l * self.omega_max**2 - self.f_max) > 1e-6 * self.f_max:
            problems.append("4*c_l*omega_max^2 must equal f_max")
        if self.rotor_positions.shape != (4, 3):
            problems.append("rotor_positions must be (4,3)")
        if abs(float(np.sum(self.rotor_spin_dirs))) > 1e-12 or not np.all(np.abs(self.rotor_spin_dirs) == 1.0):
            problems.append("rotor_spin_dirs must be two +1 and two -1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def c_max(self) -> float:
        """Maximum mass-normalized collective thrust, m/s^2."""
        return self.f_max / self.m

    @property
    def f_motor_max(self) -> float:
        return self.c_l * self.omega_max**2

    @property
    def hover_omega(self) -> float:
        return float(np.sqrt(self.m * GRAVITY / (4.0 * self.c_l)))

    @cached_property
    def mixer(self) -> np.ndarray:
        """Rows map per-motor thrusts to [collective force, tau_x, tau_y, tau_z]."""
        kappa = self.c_d / self.c_l
        b = np.empty((4, 4))
        b[0, :] = 1.0
        b[1, :] = self.rotor_positions[:, 1]
        b[2, :] = -self.rotor_positions[:, 0]
        b[3, :] = self.rotor_spin_dirs * kappa
        return b

    @cached_property
    def mixer_inv(self) -> np.ndarray:
        return np.linalg.inv(self.mixer)

    @cached_property
    def _packed(self) -> tuple:
        scal = np.array([
            self.m, self.inertia[0], self.inertia[1], self.inertia[2],
            self.k_mot, self.c_l, self.c_d, self.omega_max,
        ])
        return (scal, self.rotor_positions, self.rotor_spin_dirs, self.residual.stacked())

    def packed(self) -> tuple:
        """Plain-array view consumed by the compiled kernels."""
        return self._packed


@dataclass(frozen=True, eq=False)
class BodyrateGains:
    kp: np.ndarray = field(default_factory=lambda: np.array([20.0, 20.0, 8.0]))


@dataclass(eq=False)
class QuadState:
    """17-dimensional vehicle state."""

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    motor_speeds: np.ndarray

    @classmethod
    def hover(cls, params: QuadParams, p=(0.0, 0.0, 1.0)) -> "QuadState":
        w = params.hover_omega
        return cls(p=np.array(p, dtype=np.float64), q=np.array([1.0, 0.0, 0.0, 0.0]),
                   v=np.zeros(3), omega=np.zeros(3), motor_speeds=np.full(4, w))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "QuadState":
        x = np.asarray(x, dtype=np.float64)
        return cls(p=x[0:3].copy(), q=x[3:7].copy(), v=x[7:10].copy(),
                   omega=x[10:13].copy(), motor_speeds=x[13:17].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.omega, self.motor_speeds])

    def copy(self) -> "QuadState":
        return QuadState(self.p.copy(), self.q.copy(), self.v.copy(),
                         self.omega.copy(), self.motor_speeds.copy())

    def validate(self, params: QuadParams) -> None:
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-9:
            raise ValueError("quaternion norm must be 1 within 1e-9")
        if np.any(self.motor_speeds < 0) or np.any(self.motor_speeds > params.omega_max):
            raise ValueError("motor speeds outside [0, omega_max]")


@dataclass(eq=False)
class StateDerivative:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    motor_speeds: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.omega, self.motor_speeds])


@dataclass(eq=False)
class CtbrCommand:
    """Collective mass-normalized thrust (m/s^2) plus bodyrate setpoint (rad/s)."""

    c: float
    omega_ref: np.ndarray


@dataclass(eq=False)
class Wrench:
    f: np.ndarray
    tau: np.ndarray


def propeller_wrench(motor_speeds: np.ndarray, params: QuadParams) -> Wrench:
    """Quadratic per-rotor thrust/drag model summed over the four rotors."""
    w2 = np.asarray(motor_speeds, dtype=np.float64) ** 2
    thrusts = params.c_l * w2
    f = np.array([0.0, 0.0, float(np.sum(thrusts))])
    tau = np.zeros(3)
    tau[2] = float(np.sum(params.rotor_spin_dirs * params.c_d * w2))
    # r x f with f along body z: (r_y*f, -r_x*f, 0)
    tau[0] += float(np.sum(params.rotor_positions[:, 1] * thrusts))
    tau[1] -= float(np.sum(params.rotor_positions[:, 0] * thrusts))
    return Wrench(f=f, tau=tau)


def residual_wrench(v_body: np.ndarray, omega_body: np.ndarray, coeffs: ResidualCoeffs) -> Wrench:
    v_body = np.asarray(v_body, dtype=np.float64)
    f = -(np.asarray(coeffs.A_lin) @ v_body + np.asarray(coeffs.A_quad) @ (v_body * np.abs(v_body)))
    tau = -(np.asarray(coeffs.B_lin) @ np.asarray(omega_body, dtype=np.float64))
    return Wrench(f=f, tau=tau)


def derivative(state: QuadState, omega_cmd: np.ndarray, params: QuadParams) -> StateDerivative:
    dx = _kernels.state_derivative(state.as_vector(), np.asarray(omega_cmd, dtype=np.float64),
                                   *params.packed())
    return StateDerivative(p=dx[0:3], q=dx[3:7], v=dx[7:10], omega=dx[10:13],
                           motor_speeds=dx[13:17])


def step_rk4(state: QuadState, omega_cmd: np.ndarray, params: QuadParams, dt: float) -> QuadState:
    """Classical RK4 step; renormalizes the quaternion and clamps motor speeds."""
    if not 0.0 < dt <= 0.01:
        raise ValueError("dt must be in (0, 0.01]")
    out = _kernels.rk4_step(state.as_vector(), np.asarray(omega_cmd, dtype=np.float64), dt,
                            *params.packed())
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("non-finite state after RK4 step")
    return QuadState.from_vector(out)


def desired_torque(cmd: CtbrCommand, state: QuadState, params: QuadParams,
                   gains: BodyrateGains) -> np.ndarray:
    """Torque demanded by the proportional bodyrate loop (inertia-scaled)."""
    return params.inertia * gains.kp * (np.asarray(cmd.omega_ref) - state.omega)


def low_level_control(cmd: CtbrCommand, state: QuadState, params: QuadParams,
                      gains: BodyrateGains) -> np.ndarray:
    """Motor speed commands realizing the CTBR demand through the thrust mixer.

    Saturation never fails: the torque demand is scaled toward zero until all
    per-motor thrusts fit [0, f_motor_max], keeping collective thrust intact.
    """
    scal = params.packed()[0]
    return _kernels.motor_command(float(cmd.c), np.asarray(cmd.omega_ref, dtype=np.float64),
                                  state.omega, scal, gains.kp, params.mixer_inv,
                                  params.f_motor_max)


def control_step(state: QuadState, cmd: CtbrCommand, params: QuadParams, gains: BodyrateGains,
                 dt: float, n_substeps: int) -> list[QuadState]:
    """Apply one CTBR command over n_substeps RK4 steps; returns the substep states."""
    scal, rpos, spin, res = params.packed()
    states = _kernels.control_step(state.as_vector(), float(cmd.c),
                                   np.asarray(cmd.omega_ref, dtype=np.float64), dt, n_substeps,
                                   scal, rpos, spin, res, gains.kp, params.mixer_inv,
                                   params.f_motor_max)
    if not np.all(np.isfinite(states)):
        raise NonFiniteState("non-finite state during control step")
    return [QuadState.from_vector(states[k]) for k in range(n_substeps)]


def mechanical_energy(state: QuadState, params: QuadParams) -> float:
    """Gravitational + translational + rotational energy, J."""
    return float(params.m * GRAVITY * state.p[2]
                 + 0.5 * params.m * np.dot(state.v, state.v)
                 + 0.5 * np.dot(state.omega, params.inertia * state.omega))
