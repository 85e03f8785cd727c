"""Procedural gait clips for tests, demos, and desk-scale training.

Feet are planted by the analytic leg solver so stance frames carry clean
contact labels and near-zero foot skate; swing phases lift the ankle above
the contact thresholds.  Not motion capture, but kinematically honest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import quat
from .bvh import RawClip, write_bvh
from .ik import leg_chain_lengths, solve_two_bone
from .skeleton import canonical_skeleton

ANKLE_REST = 7.0  # cm, toe drop below the ankle joint


def gait_clip(T, speed=2.0, period=40, lift=8.0, root_height=89.0, bob=1.5,
              arm_swing=0.45, sway=0.0, fps=60):
    """Straight +Z walk with pinned stance feet.

    speed: cm/frame; period: frames per full leg cycle; lift: swing ankle
    raise in cm; sway: lateral root sway amplitude (used by the idle gait).
    """
    skel = canonical_skeleton()
    J = skel.num_joints
    rotations = np.tile(quat.IDENTITY, (T, J, 1))
    root = np.zeros((T, 3))
    t = np.arange(T)
    phase = 2.0 * np.pi * t / period
    root[:, 0] = sway * np.sin(phase / 2.0)
    root[:, 1] = root_height + bob * np.sin(2.0 * phase)
    root[:, 2] = speed * t

    upper_len, lower_len = leg_chain_lengths(skel, "Left")
    stride = speed * period

    def ankle_target(frame, phase_offset):
        """World ankle position for one leg; half stance, half swing."""
        cycle = (frame + phase_offset) / period
        k = np.floor(cycle)
        frac = cycle - k
        plant = stride * (k + 0.25) - phase_offset * speed
        if speed == 0.0:
            plant = 0.0
        if frac < 0.5:  # stance
            z, y = plant, ANKLE_REST
        else:           # swing to the next plant
            s = (frac - 0.5) * 2.0
            z = plant + stride * (s - np.sin(2 * np.pi * s) / (2 * np.pi))
            y = ANKLE_REST + lift * np.sin(np.pi * s)
        return np.array([0.0, y, z])

    sides = (("Left", 0.0), ("Right", period / 2.0))
    for name, phase_offset in sides:
        hip_idx = skel.index(f"{name}UpLeg")
        knee_idx = skel.index(f"{name}Leg")
        ankle_idx = skel.index(f"{name}Foot")
        lateral = skel.offsets[hip_idx][0]
        for frame in range(T):
            hip_world = root[frame] + skel.offsets[hip_idx]
            target = ankle_target(frame, phase_offset)
            target[0] = root[frame, 0] + lateral
            hip_q, knee_q, _ = solve_two_bone(
                hip_world, target, upper_len, lower_len, np.array([0.0, 0.0, 1.0])
            )
            rotations[frame, hip_idx] = hip_q
            rotations[frame, knee_idx] = quat.mul(quat.conjugate(hip_q), knee_q)
            rotations[frame, ankle_idx] = quat.conjugate(knee_q)  # keep the foot level

    arm_axis = np.array([1.0, 0.0, 0.0])
    for name, sign in (("LeftArm", 1.0), ("RightArm", -1.0)):
        idx = skel.index(name)
        swing = arm_swing * np.sin(phase) * sign * (1.0 if speed > 0 else 0.2)
        rotations[:, idx] = quat.from_axis_angle(arm_axis, swing)
    spine = skel.index("Spine")
    rotations[:, spine] = quat.from_axis_angle(arm_axis, 0.05 * np.sin(phase))

    return RawClip(
        skeleton=skel,
        rotations=rotations,
        root_positions=root,
        frame_time=1.0 / fps,
    ).validate(tol=1e-6)


GAIT_STYLES = {
    "walk": dict(speed=2.0, period=40, lift=8.0, bob=1.5),
    "run": dict(speed=4.5, period=24, lift=14.0, bob=2.5, arm_swing=0.8),
    "idle": dict(speed=0.0, period=60, lift=0.0, bob=0.8, arm_swing=0.0, sway=2.0),
}


def write_corpus(out_dir, plan, fps=60):
    """Write gait BVH files plus a dataset manifest.

    plan: list of (style, frames) or (style, frames, count) entries.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    types = sorted({entry[0] for entry in plan})
    sequences = []
    serial = 0
    for entry in plan:
        style, frames = entry[0], entry[1]
        count = entry[2] if len(entry) > 2 else 1
        for _ in range(count):
            clip = gait_clip(frames, fps=fps, **GAIT_STYLES[style])
            name = f"{style}_{serial:03d}.bvh"
            (out_dir / name).write_text(write_bvh(clip))
            sequences.append(
                {
                    "path": name,
                    "performer": "synthetic",
                    "spans": [{"start": 0, "end": frames, "type": style}],
                }
            )
            serial += 1
    manifest = {"types": types, "fps": fps, "sequences": sequences}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
