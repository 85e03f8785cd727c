"""Analytic two-bone inverse kinematics for the leg chains.

Solves hip and knee rotations so the ankle lands on a world target while
the knee stays in the plane spanned by the hip-to-target line and a pole
direction.  Used to plant feet during synthesis cleanup and to author the
procedural gait clips.
"""

from __future__ import annotations

import numpy as np

from . import quat

REACH_MARGIN = 1e-4


def _orthonormal(bone_dir, bend_axis):
    """World rotation whose -Y maps to bone_dir and +X to bend_axis."""
    x = bend_axis / np.linalg.norm(bend_axis)
    y = -bone_dir / np.linalg.norm(bone_dir)
    z = np.cross(x, y)
    z /= np.linalg.norm(z)
    x = np.cross(y, z)
    m = np.stack([x, y, z], axis=1)
    return _matrix_to_quat(m)


def _matrix_to_quat(m):
    w = np.sqrt(max(0.0, 1.0 + m[0, 0] + m[1, 1] + m[2, 2])) / 2.0
    if w > 1e-6:
        x = (m[2, 1] - m[1, 2]) / (4 * w)
        y = (m[0, 2] - m[2, 0]) / (4 * w)
        z = (m[1, 0] - m[0, 1]) / (4 * w)
    else:
        # fall back through the dominant diagonal element
        i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        if i == 0:
            x = np.sqrt(max(0.0, 1 + m[0, 0] - m[1, 1] - m[2, 2])) / 2
            w = (m[2, 1] - m[1, 2]) / (4 * x)
            y = (m[0, 1] + m[1, 0]) / (4 * x)
            z = (m[0, 2] + m[2, 0]) / (4 * x)
        elif i == 1:
            y = np.sqrt(max(0.0, 1 - m[0, 0] + m[1, 1] - m[2, 2])) / 2
            w = (m[0, 2] - m[2, 0]) / (4 * y)
            x = (m[0, 1] + m[1, 0]) / (4 * y)
            z = (m[1, 2] + m[2, 1]) / (4 * y)
        else:
            z = np.sqrt(max(0.0, 1 - m[0, 0] - m[1, 1] + m[2, 2])) / 2
            w = (m[1, 0] - m[0, 1]) / (4 * z)
            x = (m[0, 2] + m[2, 0]) / (4 * z)
            y = (m[1, 2] + m[2, 1]) / (4 * z)
    return quat.normalize(np.array([w, x, y, z]))


def solve_two_bone(hip_pos, target, upper_len, lower_len, pole):
    """World-space hip and knee orientations placing the ankle at `target`.

    Returns (hip_world_quat, knee_world_quat, clamped: bool).  Both bones
    point along -Y in their rest orientation; +X is the knee bend axis.
    """
    span = np.asarray(target, dtype=float) - np.asarray(hip_pos, dtype=float)
    dist = np.linalg.norm(span)
    lo = abs(upper_len - lower_len) + REACH_MARGIN
    hi = upper_len + lower_len - REACH_MARGIN
    clamped = not (lo <= dist <= hi)
    d = float(np.clip(dist, lo, hi))
    span_dir = span / (dist if dist > 1e-9 else 1.0)

    pole = np.asarray(pole, dtype=float)
    side = pole - span_dir * float(pole @ span_dir)
    if np.linalg.norm(side) < 1e-6:
        # pole degenerate with the target line; pick any perpendicular
        helper = np.array([1.0, 0.0, 0.0])
        if abs(span_dir @ helper) > 0.9:
            helper = np.array([0.0, 0.0, 1.0])
        side = helper - span_dir * float(helper @ span_dir)
    side /= np.linalg.norm(side)

    cos_hip = (upper_len**2 + d**2 - lower_len**2) / (2.0 * upper_len * d)
    sin_hip = np.sqrt(max(0.0, 1.0 - cos_hip**2))
    knee_pos = np.asarray(hip_pos) + span_dir * (upper_len * cos_hip) + side * (upper_len * sin_hip)
    ankle_pos = np.asarray(hip_pos) + span_dir * d

    upper_dir = (knee_pos - hip_pos) / upper_len
    lower_dir = (ankle_pos - knee_pos) / lower_len
    bend_axis = np.cross(upper_dir, lower_dir)
    if np.linalg.norm(bend_axis) < 1e-8:
        bend_axis = np.cross(side, span_dir)
    hip_q = _orthonormal(upper_dir, bend_axis)
    knee_q = _orthonormal(lower_dir, bend_axis)
    return hip_q, knee_q, clamped


def leg_chain_lengths(skel, side):
    """(upper, lower) bone lengths for "Left" or "Right"."""
    upper = np.linalg.norm(skel.offsets[skel.index(f"{side}Leg")])
    lower = np.linalg.norm(skel.offsets[skel.index(f"{side}Foot")])
    return float(upper), float(lower)
