"""Quaternion and rotation helpers.

Quaternions are stored (w, x, y, z) in the last axis; all functions are
vectorized over leading axes.  Angles are radians unless a function name
says degrees.  The up axis is +Y and the neutral facing direction is +Z.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def mul(a, b):
    """Hamilton product a*b (apply b first, then a)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = angle / 2.0
    s = np.sin(half)
    return np.concatenate(
        [np.cos(half)[..., None], axis * s[..., None]], axis=-1
    )


def to_expmap(q):
    """Axis-angle 3-vector of q, chosen in the w >= 0 hemisphere."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = np.clip(q[..., 0], -1.0, 1.0)
    vec = q[..., 1:]
    norm = np.linalg.norm(vec, axis=-1)
    angle = 2.0 * np.arctan2(norm, w)
    # sin(angle/2) = norm; scale = angle / norm with the small-angle limit 2
    scale = np.where(norm > 1e-12, angle / np.maximum(norm, 1e-12), 2.0)
    return vec * scale[..., None]


def from_expmap(e):
    e = np.asarray(e, dtype=float)
    angle = np.linalg.norm(e, axis=-1)
    half = angle / 2.0
    # sin(half)/angle with the small-angle limit 1/2
    k = np.where(angle > 1e-12, np.sin(half) / np.maximum(angle, 1e-12), 0.5)
    return np.concatenate([np.cos(half)[..., None], e * k[..., None]], axis=-1)


def to_matrix(q):
    q = normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def yaw_of(q):
    """Heading angle about +Y of the rotated +Z axis."""
    f = rotate(q, np.broadcast_to([0.0, 0.0, 1.0], np.shape(q)[:-1] + (3,)))
    return np.arctan2(f[..., 0], f[..., 2])


def yaw_quat(yaw):
    yaw = np.asarray(yaw, dtype=float)
    half = yaw / 2.0
    zeros = np.zeros_like(half)
    return np.stack([np.cos(half), zeros, np.sin(half), zeros], axis=-1)


def yaw_matrix(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def align_hemisphere(track):
    """Flip quaternion signs along the time axis (axis 0) so consecutive
    frames stay in the same hemisphere."""
    track = np.asarray(track, dtype=float).copy()
    dots = np.sum(track[:-1] * track[1:], axis=-1)
    sign = np.where(dots < 0.0, -1.0, 1.0)
    flips = np.cumprod(sign, axis=0)
    track[1:] *= flips[..., None]
    return track


_AXIS = {"X": np.array([1.0, 0, 0]), "Y": np.array([0, 1.0, 0]), "Z": np.array([0, 0, 1.0])}


def euler_deg_to_quat(angles_deg, order):
    """Compose per-axis rotations in the given channel order.

    ``order`` is a string like "ZYX": the resulting rotation is
    R(order[0]) @ R(order[1]) @ R(order[2]), matching BVH channel semantics.
    """
    angles = np.deg2rad(np.asarray(angles_deg, dtype=float))
    q = None
    for i, axis_name in enumerate(order):
        qi = from_axis_angle(_AXIS[axis_name], angles[..., i])
        q = qi if q is None else mul(q, qi)
    return q


def quat_to_euler_deg(q, order):
    """Inverse of euler_deg_to_quat for the ZYX and ZXY channel orders."""
    m = to_matrix(q)
    if order == "ZYX":
        y = np.arcsin(np.clip(-m[..., 2, 0], -1.0, 1.0))
        z = np.arctan2(m[..., 1, 0], m[..., 0, 0])
        x = np.arctan2(m[..., 2, 1], m[..., 2, 2])
        angles = np.stack([z, y, x], axis=-1)
    elif order == "ZXY":
        x = np.arcsin(np.clip(m[..., 2, 1], -1.0, 1.0))
        z = np.arctan2(-m[..., 0, 1], m[..., 1, 1])
        y = np.arctan2(-m[..., 2, 0], m[..., 2, 2])
        angles = np.stack([z, x, y], axis=-1)
    else:
        raise ValueError(f"unsupported rotation order: {order}")
    return np.rad2deg(angles)


def slerp(a, b, t):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.sum(a * b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-9:
        return normalize(a + t * (b - a))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    return (np.sin((1 - t) * theta) * a + np.sin(t * theta) * b) / np.sin(theta)
