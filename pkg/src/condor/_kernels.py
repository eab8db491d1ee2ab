"""Numba-compiled hot loops for the rigid-body sim and gate geometry.

State vector layout (17,): p[0:3], q[3:7] as (w,x,y,z), v_world[7:10],
omega_body[10:13], motor_speeds[13:17].

Packed parameter arrays (built by QuadParams.packed()):
  scal: [m, Jx, Jy, Jz, k_mot, c_l, c_d, omega_max]
  rpos: (4,3) rotor positions, body frame
  spin: (4,) drag-torque signs
  res:  (3,3,3) stacked residual matrices [A_lin, A_quad, B_lin]
"""

import numpy as np
from numba import njit

GRAVITY = 9.81


@njit(cache=True)
def state_derivative(x, omega_cmd, scal, rpos, spin, res):
    m = scal[0]
    jx, jy, jz = scal[1], scal[2], scal[3]
    k_mot = scal[4]
    c_l = scal[5]
    c_d = scal[6]

    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    wx, wy, wz = x[10], x[11], x[12]

    # rotation matrix body -> world (unit quaternion assumed)
    r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
    r01 = 2.0 * (qx * qy - qz * qw)
    r02 = 2.0 * (qx * qz + qy * qw)
    r10 = 2.0 * (qx * qy + qz * qw)
    r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
    r12 = 2.0 * (qy * qz - qx * qw)
    r20 = 2.0 * (qx * qz - qy * qw)
    r21 = 2.0 * (qy * qz + qx * qw)
    r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

    # propeller wrench, body frame
    fz = 0.0
    tx = 0.0
    ty = 0.0
    tz = 0.0
    for i in range(4):
        fi = c_l * x[13 + i] * x[13 + i]
        fz += fi
        tx += rpos[i, 1] * fi
        ty -= rpos[i, 0] * fi
        tz += spin[i] * c_d * x[13 + i] * x[13 + i]

    # body-frame velocity for the residual model
    vx, vy, vz = x[7], x[8], x[9]
    vbx = r00 * vx + r10 * vy + r20 * vz
    vby = r01 * vx + r11 * vy + r21 * vz
    vbz = r02 * vx + r12 * vy + r22 * vz

    fres_x = 0.0
    fres_y = 0.0
    fres_z = 0.0
    vb = (vbx, vby, vbz)
    for j in range(3):
        fres_x += res[0, 0, j] * vb[j] + res[1, 0, j] * vb[j] * abs(vb[j])
        fres_y += res[0, 1, j] * vb[j] + res[1, 1, j] * vb[j] * abs(vb[j])
        fres_z += res[0, 2, j] * vb[j] + res[1, 2, j] * vb[j] * abs(vb[j])
    fbx = -fres_x
    fby = -fres_y
    fbz = fz - fres_z

    trx = -(res[2, 0, 0] * wx + res[2, 0, 1] * wy + res[2, 0, 2] * wz)
    try_ = -(res[2, 1, 0] * wx + res[2, 1, 1] * wy + res[2, 1, 2] * wz)
    trz = -(res[2, 2, 0] * wx + res[2, 2, 1] * wy + res[2, 2, 2] * wz)

    dx = np.empty(17)
    dx[0] = vx
    dx[1] = vy
    dx[2] = vz

    # q_dot = 0.5 * q * (0, omega)
    dx[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dx[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    dx[5] = 0.5 * (qw * wy + qz * wx - qx * wz)
    dx[6] = 0.5 * (qw * wz + qx * wy - qy * wx)

    dx[7] = (r00 * fbx + r01 * fby + r02 * fbz) / m
    dx[8] = (r10 * fbx + r11 * fby + r12 * fbz) / m
    dx[9] = (r20 * fbx + r21 * fby + r22 * fbz) / m - GRAVITY

    # Euler equations with diagonal inertia
    dx[10] = (tx + trx - (wy * jz * wz - wz * jy * wy)) / jx
    dx[11] = (ty + try_ - (wz * jx * wx - wx * jz * wz)) / jy
    dx[12] = (tz + trz - (wx * jy * wy - wy * jx * wx)) / jz

    for i in range(4):
        dx[13 + i] = (omega_cmd[i] - x[13 + i]) / k_mot
    return dx


@njit(cache=True)
def rk4_step(x, omega_cmd, dt, scal, rpos, spin, res):
    k1 = state_derivative(x, omega_cmd, scal, rpos, spin, res)
    k2 = state_derivative(x + 0.5 * dt * k1, omega_cmd, scal, rpos, spin, res)
    k3 = state_derivative(x + 0.5 * dt * k2, omega_cmd, scal, rpos, spin, res)
    k4 = state_derivative(x + dt * k3, omega_cmd, scal, rpos, spin, res)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    qn = np.sqrt(out[3] * out[3] + out[4] * out[4] + out[5] * out[5] + out[6] * out[6])
    for i in range(3, 7):
        out[i] = out[i] / qn
    omega_max = scal[7]
    for i in range(13, 17):
        if out[i] < 0.0:
            out[i] = 0.0
        elif out[i] > omega_max:
            out[i] = omega_max
    return out


@njit(cache=True)
def motor_command(c_cmd, wref, omega, scal, kp, binv, f_motor_max):
    """CTBR command to per-motor speed commands, torque scaled down on saturation."""
    m = scal[0]
    c_l = scal[5]
    t0 = scal[1] * kp[0] * (wref[0] - omega[0])
    t1 = scal[2] * kp[1] * (wref[1] - omega[1])
    t2 = scal[3] * kp[2] * (wref[2] - omega[2])

    fc = m * c_cmd
    scale = 1.0
    base = np.empty(4)
    dtq = np.empty(4)
    for i in range(4):
        base[i] = binv[i, 0] * fc
        dtq[i] = binv[i, 1] * t0 + binv[i, 2] * t1 + binv[i, 3] * t2
        if dtq[i] > 1e-12:
            s_i = (f_motor_max - base[i]) / dtq[i]
            if s_i < scale:
                scale = s_i
        elif dtq[i] < -1e-12:
            s_i = base[i] / (-dtq[i])
            if s_i < scale:
                scale = s_i
    if scale < 0.0:
        scale = 0.0

    cmd = np.empty(4)
    for i in range(4):
        f = base[i] + scale * dtq[i]
        if f < 0.0:
            f = 0.0
        elif f > f_motor_max:
            f = f_motor_max
        cmd[i] = np.sqrt(f / c_l)
    return cmd


@njit(cache=True)
def control_step(x, c_cmd, wref, dt, n_sub, scal, rpos, spin, res, kp, binv, f_motor_max):
    """One policy-rate step: mix the CTBR command once, integrate n_sub RK4 substeps."""
    omega_cmd = motor_command(c_cmd, wref, x[10:13], scal, kp, binv, f_motor_max)
    states = np.empty((n_sub, 17))
    cur = x
    for k in range(n_sub):
        cur = rk4_step(cur, omega_cmd, dt, scal, rpos, spin, res)
        states[k] = cur
    return states


@njit(cache=True)
def segment_gate_event(ax, ay, az, bx, by, bz, cx, cy, cz, cyaw, syaw, half, frame_w):
    """Classify a motion segment against one gate: 0 none, 1 passed, 2 collided.

    Passing requires crossing the plane along the gate normal; frame hits
    count in either crossing direction.
    """
    da = (ax - cx) * cyaw + (ay - cy) * syaw
    db = (bx - cx) * cyaw + (by - cy) * syaw
    forward = da < 0.0 and db >= 0.0
    backward = db < 0.0 and da >= 0.0
    if not (forward or backward):
        return 0
    t = da / (da - db)
    hx = ax + t * (bx - ax)
    hy = ay + t * (by - ay)
    hz = az + t * (bz - az)
    du = -(hx - cx) * syaw + (hy - cy) * cyaw
    dw = hz - cz
    linf = max(abs(du), abs(dw))
    if forward and linf < half:
        return 1
    if half <= linf <= half + frame_w:
        return 2
    return 0


@njit(cache=True)
def gate_events(p_prev, states, centers, cyaws, syaws, halfs, frame_w,
                bbox_min, bbox_max, next_gate):
    """Walk the substep polyline and report gate passes and crash events.

    Returns (n_passes, pass_gates, pass_subs, crash_code, crash_sub, new_next)
    with crash_code 0 none, 1 gate frame, 2 ground, 3 out of bounds. Events
    are resolved chronologically; a crash stops the scan.
    """
    n_gates = centers.shape[0]
    n_sub = states.shape[0]
    pass_gates = np.full(8, -1, np.int64)
    pass_subs = np.full(8, -1, np.int64)
    n_passes = 0
    cur_next = next_gate

    ax, ay, az = p_prev[0], p_prev[1], p_prev[2]
    for k in range(n_sub):
        bx, by, bz = states[k, 0], states[k, 1], states[k, 2]
        for g in range(n_gates):
            code = segment_gate_event(ax, ay, az, bx, by, bz,
                                      centers[g, 0], centers[g, 1], centers[g, 2],
                                      cyaws[g], syaws[g], halfs[g], frame_w)
            if code == 2:
                return n_passes, pass_gates, pass_subs, 1, k, cur_next
            if code == 1 and g == cur_next and n_passes < 8:
                pass_gates[n_passes] = g
                pass_subs[n_passes] = k
                n_passes += 1
                cur_next = (cur_next + 1) % n_gates
        if bz < 0.0:
            return n_passes, pass_gates, pass_subs, 2, k, cur_next
        if (bx < bbox_min[0] or bx > bbox_max[0] or by < bbox_min[1] or
                by > bbox_max[1] or bz < bbox_min[2] or bz > bbox_max[2]):
            return n_passes, pass_gates, pass_subs, 3, k, cur_next
        ax, ay, az = bx, by, bz
    return n_passes, pass_gates, pass_subs, 0, -1, cur_next
