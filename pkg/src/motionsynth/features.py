"""Motion and control-signal representations.

A frame of motion becomes a 276-value vector (for the 23-joint rig):

    [0:6]     root block: yaw angular velocity (rad/frame), X and Z root
              velocity (cm/frame, in the yaw-aligned root frame), root
              height (cm), 2-D tilt (X and Z of the yaw-removed root
              rotation's axis-angle vector)
    [6:72]    22 non-root joint rotations, axis-angle 3-vectors
    [72:138]  22 joint angular velocities, axis-angle of q_prev^-1 * q
    [138:207] 23 joint positions in the root frame (root entry (0, h, 0))
    [207:276] 23 joint linear velocities in the root frame (root entry
              (vx, 0, vz), a restatement of the root block)

The root frame has its origin at the root's ground projection and its Z
axis along the character's facing direction.  The root's own position and
velocity entries are exact functions of the root block, which is what lets
the two body-part vectors reassemble into the full vector losslessly.

Four binary foot-contact labels (lf, lt, rf, rt) ride alongside the vector,
not inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .skeleton import LOWER_JOINTS, UPPER_JOINTS, forward_kinematics

CONTROL_OFFSETS = (10, 20, 30, 40, 50, 60)  # future samples, frames at 60 fps
NUM_CONTROL_SAMPLES = len(CONTROL_OFFSETS)


class FeatureLayout:
    """Index bookkeeping for the per-frame motion vector."""

    def __init__(self, num_joints=23):
        self.num_joints = num_joints
        nr = num_joints - 1  # non-root
        self.root = slice(0, 6)
        self.rotations = slice(6, 6 + 3 * nr)
        self.angular_velocities = slice(self.rotations.stop, self.rotations.stop + 3 * nr)
        self.positions = slice(
            self.angular_velocities.stop, self.angular_velocities.stop + 3 * num_joints
        )
        self.linear_velocities = slice(self.positions.stop, self.positions.stop + 3 * num_joints)
        self.size = self.linear_velocities.stop

    def rotation_of(self, j):
        """Slice of joint j's rotation (j >= 1)."""
        s = self.rotations.start + 3 * (j - 1)
        return slice(s, s + 3)

    def angular_velocity_of(self, j):
        s = self.angular_velocities.start + 3 * (j - 1)
        return slice(s, s + 3)

    def position_of(self, j):
        s = self.positions.start + 3 * j
        return slice(s, s + 3)

    def linear_velocity_of(self, j):
        s = self.linear_velocities.start + 3 * j
        return slice(s, s + 3)

    def dimension_labels(self, joint_names):
        labels = ["root.yaw_vel", "root.vx", "root.vz", "root.height", "root.tilt_x", "root.tilt_z"]
        for group in ("rot", "angvel"):
            for name in joint_names[1:]:
                labels += [f"{group}.{name}.{c}" for c in "xyz"]
        for group in ("pos", "linvel"):
            for name in joint_names:
                labels += [f"{group}.{name}.{c}" for c in "xyz"]
        return labels


LAYOUT = FeatureLayout()
FEATURE_SIZE = LAYOUT.size  # 276 for the canonical rig


@dataclass
class Pose:
    """World-space playback state: root transform plus local rotations."""

    root_position: np.ndarray    # (3,)
    yaw: float
    rotations: np.ndarray        # (J, 4), entry 0 is the root's world rotation

    def copy(self):
        return Pose(self.root_position.copy(), float(self.yaw), self.rotations.copy())


def _to_root_frame(points, yaw, root_position):
    """Express world points in the yaw-aligned frame at the root's ground
    projection."""
    ground = np.array([root_position[0], 0.0, root_position[2]])
    return quat.rotate(quat.yaw_quat(-yaw), points - ground)


def clip_features(clip):
    """Per-frame motion vectors for frames 1..T-1 of a clip.

    Returns (T-1, 276); frame 0 has no predecessor for the velocity terms.
    """
    T = clip.num_frames
    if T < 2:
        raise ValueError("need at least 2 frames to extract features")
    layout = FeatureLayout(clip.skeleton.num_joints)
    out = np.empty((T - 1, layout.size))
    positions_world = forward_kinematics(
        clip.skeleton, clip.rotations, clip.root_positions
    )  # (T, J, 3)

    root_q = clip.rotations[:, 0, :]
    yaws = quat.yaw_of(root_q)
    aligned = quat.align_hemisphere(clip.rotations.reshape(T, -1, 4).transpose(1, 0, 2))
    aligned = aligned.transpose(1, 0, 2)  # (T, J, 4) sign-continuous per joint

    for n in range(1, T):
        out[n - 1] = _frame_vector(clip, layout, positions_world, yaws, aligned, n)
    return out


def frame_features(clip, n):
    """Motion vector for a single frame n >= 1."""
    if n < 1:
        raise ValueError("frame 0 has no predecessor; features start at frame 1")
    layout = FeatureLayout(clip.skeleton.num_joints)
    positions_world = forward_kinematics(clip.skeleton, clip.rotations, clip.root_positions)
    yaws = quat.yaw_of(clip.rotations[:, 0, :])
    T = clip.num_frames
    aligned = quat.align_hemisphere(
        clip.rotations.reshape(T, -1, 4).transpose(1, 0, 2)
    ).transpose(1, 0, 2)
    return _frame_vector(clip, layout, positions_world, yaws, aligned, n)


def _frame_vector(clip, layout, positions_world, yaws, rotations, n):
    vec = np.empty(layout.size)
    yaw = float(yaws[n])
    yaw_vel = float(quat.wrap_angle(yaws[n] - yaws[n - 1]))
    delta = clip.root_positions[n] - clip.root_positions[n - 1]
    v_local = quat.rotate(quat.yaw_quat(-yaw), np.array([delta[0], 0.0, delta[2]]))
    no_yaw = quat.mul(quat.yaw_quat(-yaw), rotations[n, 0])
    tilt = quat.to_expmap(no_yaw)
    vec[layout.root] = [yaw_vel, v_local[0], v_local[2], clip.root_positions[n][1], tilt[0], tilt[2]]

    vec[layout.rotations] = quat.to_expmap(rotations[n, 1:]).reshape(-1)
    rel = quat.mul(quat.conjugate(rotations[n - 1, 1:]), rotations[n, 1:])
    vec[layout.angular_velocities] = quat.to_expmap(rel).reshape(-1)

    pos_now = _to_root_frame(positions_world[n], yaw, clip.root_positions[n])
    pos_prev = _to_root_frame(positions_world[n - 1], yaw, clip.root_positions[n])
    vel = pos_now - pos_prev
    vel[0] = [v_local[0], 0.0, v_local[2]]  # root entry restates the root block
    vec[layout.positions] = pos_now.reshape(-1)
    vec[layout.linear_velocities] = vel.reshape(-1)
    return vec


def apply_frame(pose, vec, layout=LAYOUT):
    """Advance a Pose by one motion vector (inverse of feature extraction)."""
    root = vec[layout.root]
    yaw = pose.yaw + float(root[0])
    step = quat.rotate(quat.yaw_quat(yaw), np.array([root[1], 0.0, root[2]]))
    position = pose.root_position + step
    position[1] = root[3]

    J = layout.num_joints
    rotations = np.empty((J, 4))
    tilt = np.array([root[4], 0.0, root[5]])
    rotations[0] = quat.mul(quat.yaw_quat(yaw), quat.from_expmap(tilt))
    rotations[1:] = quat.from_expmap(vec[layout.rotations].reshape(J - 1, 3))
    return Pose(position, yaw, rotations)


def pose_from_clip(clip, n):
    rotations = clip.rotations[n].copy()
    return Pose(
        clip.root_positions[n].copy(),
        float(quat.yaw_of(rotations[0])),
        rotations,
    )


def detect_contacts(clip, height_thresholds=(12.0, 3.0, 12.0, 3.0), speed_threshold=1.5):
    """Binary contact labels (T, 4) for (lf, lt, rf, rt).

    A joint is in contact when its world height is below its threshold and
    its ground-plane speed is below speed_threshold (cm/frame).
    """
    feet = clip.skeleton.foot_joint_indices
    if len(feet) != 4:
        raise ValueError("skeleton does not define the 4 foot joints")
    world = forward_kinematics(clip.skeleton, clip.rotations, clip.root_positions)
    pos = world[:, list(feet), :]  # (T, 4, 3)
    heights = pos[:, :, 1]
    deltas = np.diff(pos[:, :, [0, 2]], axis=0)
    speeds = np.linalg.norm(deltas, axis=-1)
    speeds = np.concatenate([speeds[:1], speeds], axis=0)  # frame 0 reuses frame 1
    labels = (heights < np.asarray(height_thresholds)) & (speeds < speed_threshold)
    return labels.astype(np.float64)


def tpose_positions(skel):
    """Joint positions with identity rotations and the root at the origin."""
    rot = np.tile(quat.IDENTITY, (skel.num_joints, 1))
    return forward_kinematics(skel, rot, np.zeros(3))


@dataclass
class ControlRecord:
    """Steering data for one frame: character shape, motion type, and the
    one-second-ahead path."""

    skeleton_pose: np.ndarray       # (J*3,) T-pose positions, cm
    type_weights: np.ndarray        # (6, K) rows sum to 1
    future_positions: np.ndarray    # (6, 2) XZ in the root frame, cm
    future_directions: np.ndarray   # (6, 2) unit XZ facing in the root frame

    def validate(self, tol=1e-4):
        sums = self.type_weights.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > tol):
            raise ValueError("type weight rows must sum to 1")
        norms = np.linalg.norm(self.future_directions, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError("future directions must be unit vectors")
        return self


def control_dim(num_types, num_joints=23):
    return num_joints * 3 + NUM_CONTROL_SAMPLES * (num_types + 4)


def extract_controls(clip, type_ids, n, num_types, tpose=None):
    """Ground-truth ControlRecord for frame n; future frames are clamped to
    the clip end (edge padding)."""
    T = clip.num_frames
    if tpose is None:
        tpose = tpose_positions(clip.skeleton)
    yaw = float(quat.yaw_of(clip.rotations[n, 0]))
    root = clip.root_positions[n]

    idx = np.minimum(np.array(CONTROL_OFFSETS) + n, T - 1)
    future_pos = _to_root_frame(clip.root_positions[idx], yaw, root)[:, [0, 2]]

    forward = quat.rotate(clip.rotations[idx, 0, :], np.array([0.0, 0.0, 1.0]))
    forward = quat.rotate(quat.yaw_quat(-yaw), forward)
    fxz = forward[:, [0, 2]]
    fxz = fxz / np.linalg.norm(fxz, axis=1, keepdims=True)

    onehot = np.zeros((NUM_CONTROL_SAMPLES, num_types))
    onehot[np.arange(NUM_CONTROL_SAMPLES), np.asarray(type_ids)[idx]] = 1.0
    return ControlRecord(
        skeleton_pose=tpose.reshape(-1).copy(),
        type_weights=onehot,
        future_positions=future_pos,
        future_directions=fxz,
    )


def control_vector(record):
    return np.concatenate(
        [
            record.skeleton_pose,
            record.type_weights.reshape(-1),
            record.future_positions.reshape(-1),
            record.future_directions.reshape(-1),
        ]
    )


@dataclass
class NormStats:
    """Per-dimension z-score statistics.  Motion-type weights are never
    normalized; their values already live in [0, 1]."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    skeleton_mean: np.ndarray
    skeleton_std: np.ndarray
    position_mean: np.ndarray     # over the 12 future-position values
    position_std: np.ndarray
    direction_mean: np.ndarray
    direction_std: np.ndarray
    labels: dict = field(default_factory=dict)

    STD_FLOOR = 1e-6

    @classmethod
    def fit(cls, features, controls, joint_names=None):
        """features: (N, 276); controls: list/array of control vectors."""

        def stats(x):
            x = np.asarray(x, dtype=float)
            mean = x.mean(axis=0)
            std = np.maximum(x.std(axis=0), cls.STD_FLOOR)
            return mean, std

        features = np.asarray(features, dtype=float)
        fm, fs = stats(features)
        skel = np.asarray([c.skeleton_pose for c in controls])
        pos = np.asarray([c.future_positions.reshape(-1) for c in controls])
        direc = np.asarray([c.future_directions.reshape(-1) for c in controls])
        sm, ss = stats(skel)
        pm, ps = stats(pos)
        dm, ds = stats(direc)
        labels = {}
        if joint_names is not None:
            labels["features"] = FeatureLayout(len(joint_names)).dimension_labels(joint_names)
        return cls(fm, fs, sm, ss, pm, ps, dm, ds, labels)

    def normalize_features(self, x):
        return (x - self.feature_mean) / self.feature_std

    def denormalize_features(self, x):
        return x * self.feature_std + self.feature_mean

    def normalize_control(self, record):
        """Control vector with z-scored blocks and raw type weights."""
        return np.concatenate(
            [
                (record.skeleton_pose - self.skeleton_mean) / self.skeleton_std,
                record.type_weights.reshape(-1),
                (record.future_positions.reshape(-1) - self.position_mean) / self.position_std,
                (record.future_directions.reshape(-1) - self.direction_mean) / self.direction_std,
            ]
        )

    def normalize_future_positions(self, p):
        return (np.asarray(p).reshape(-1) - self.position_mean) / self.position_std

    def normalize_future_directions(self, d):
        return (np.asarray(d).reshape(-1) - self.direction_mean) / self.direction_std

    def denormalize_future_positions(self, p):
        return np.asarray(p).reshape(-1) * self.position_std + self.position_mean

    def denormalize_future_directions(self, d):
        return np.asarray(d).reshape(-1) * self.direction_std + self.direction_mean

    def save(self, path):
        payload = {
            key: getattr(self, key).tolist()
            for key in (
                "feature_mean", "feature_std", "skeleton_mean", "skeleton_std",
                "position_mean", "position_std", "direction_mean", "direction_std",
            )
        }
        payload["labels"] = self.labels
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        labels = payload.pop("labels", {})
        arrays = {k: np.asarray(v, dtype=float) for k, v in payload.items()}
        return cls(labels=labels, **arrays)


class PartitionScheme:
    """Split of the non-root joints into upper and lower body parts.

    Both part vectors start with the shared root block; the lower part
    carries the contact labels at its tail.
    """

    def __init__(self, skel, upper_names=UPPER_JOINTS, lower_names=LOWER_JOINTS):
        self.layout = FeatureLayout(skel.num_joints)
        self.upper_joints = tuple(skel.index(n) for n in upper_names)
        self.lower_joints = tuple(skel.index(n) for n in lower_names)
        cover = sorted(self.upper_joints + self.lower_joints)
        if cover != list(range(1, skel.num_joints)):
            raise ValueError("parts must disjointly cover the non-root joints")
        self.upper_index = self._part_index(self.upper_joints)
        self.lower_index = self._part_index(self.lower_joints)
        self.upper_size = 6 + 12 * len(self.upper_joints)
        self.lower_size = 6 + 12 * len(self.lower_joints) + 4

    def _part_index(self, joints):
        layout = self.layout
        idx = list(range(6))
        for of in (layout.rotation_of, layout.angular_velocity_of,
                   layout.position_of, layout.linear_velocity_of):
            for j in joints:
                idx.extend(range(of(j).start, of(j).stop))
        return np.array(idx)

    def split(self, features, labels):
        """(..., 276) + (..., 4) -> upper (..., 162), lower (..., 118)."""
        features = np.asarray(features)
        upper = features[..., self.upper_index]
        lower = np.concatenate([features[..., self.lower_index], np.asarray(labels)], axis=-1)
        return upper, lower

    def reassemble(self, upper, lower):
        """Inverse of split; the root's own position/velocity entries are
        regenerated from the root block."""
        upper = np.asarray(upper)
        lower = np.asarray(lower)
        labels = lower[..., -4:]
        lower_body = lower[..., :-4]
        out = np.zeros(upper.shape[:-1] + (self.layout.size,), dtype=upper.dtype)
        out[..., self.upper_index] = upper
        out[..., self.lower_index] = lower_body
        root = upper[..., :6]
        rp = self.layout.position_of(0)
        rv = self.layout.linear_velocity_of(0)
        out[..., rp.start + 1] = root[..., 3]                  # (0, h, 0)
        out[..., rv.start] = root[..., 1]                      # (vx, 0, vz)
        out[..., rv.start + 2] = root[..., 2]
        return out, labels
