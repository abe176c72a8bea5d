"""Quaternion and rotation helpers, batched over a leading axis.

Quaternions are scalar-first (w, x, y, z) float64 arrays.  All functions
accept either a single (4,)/(3,) array or batches (..., 4)/(..., 3).
"""

from __future__ import annotations

import numpy as np


def quat_identity(n=None):
    if n is None:
        return np.array([1.0, 0.0, 0.0, 0.0])
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def quat_normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = aw * bw - ax * bx - ay * by - az * bz
    out[..., 1] = aw * bx + ax * bw + ay * bz - az * by
    out[..., 2] = aw * by - ax * bz + ay * bw + az * bx
    out[..., 3] = aw * bz + ax * by - ay * bx + az * bw
    return out


def quat_conj(q):
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    w = q[..., 0:1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_rotate_inv(q, v):
    w = q[..., 0:1]
    u = -q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=float)
    half = angle / 2.0
    s = np.sin(half)
    return np.concatenate(
        [np.cos(half)[..., None], axis * s[..., None]], axis=-1
    )


def quat_exp(phi):
    """Exponential map: rotation vector (..., 3) -> unit quaternion (..., 4).

    Safe at phi -> 0 via the series for sin(x/2)/x.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.sqrt(
        (phi * phi).sum(axis=-1, keepdims=True)
    )
    half = 0.5 * theta
    small = theta < 1e-12
    k = np.where(small, 0.5, np.sin(half) / np.where(small, 1.0, theta))
    out = np.concatenate([np.cos(half), phi * k], axis=-1)
    return out


def quat_to_mat(q):
    """Quaternion (..., 4) -> rotation matrix (..., 3, 3)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def rpy_to_mat(roll, pitch, yaw):
    """Intrinsic roll-pitch-yaw (x, then y, then z) to rotation matrix."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def cross(a, b):
    """Componentwise cross product over the last axis (faster than np.cross
    for small stacked operands, and free of its moveaxis bookkeeping)."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def dot_last(a, b):
    return (
        a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]
    )


def quat_angle_about_axis(q0, q1, axis):
    """Signed rotation angle about a fixed axis taking q0 to q1.

    Uses the swing-twist decomposition of the relative rotation; returns the
    twist angle in (-pi, pi].
    """
    rel = quat_mul(q1, quat_conj(q0))
    w = rel[..., 0]
    proj = rel[..., 1] * axis[0] + rel[..., 2] * axis[1] + rel[..., 3] * axis[2]
    return 2.0 * np.arctan2(proj, w)
