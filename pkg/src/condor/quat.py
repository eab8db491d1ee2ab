"""Quaternion helpers, scalar-first convention (w, x, y, z), body-to-world rotation."""

import numpy as np


def normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R with v_world = R @ v_body. Assumes |q| = 1."""
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a body-frame vector into the world frame."""
    return to_rotmat(q) @ v


def rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a world-frame vector into the body frame."""
    return to_rotmat(q).T @ v


def derivative(q: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
    """q_dot = 0.5 * q * (0, omega)."""
    return 0.5 * multiply(q, np.array([0.0, omega_body[0], omega_body[1], omega_body[2]]))


def from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


def from_euler_xyz(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic rotations applied in z-y-x order (yaw, then pitch, then roll)."""
    qz = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
    qy = np.array([np.cos(pitch / 2), 0.0, np.sin(pitch / 2), 0.0])
    qx = np.array([np.cos(roll / 2), np.sin(roll / 2), 0.0, 0.0])
    return multiply(multiply(qz, qy), qx)
