"""Kinematic tree: joint hierarchy, offsets, forward kinematics.

Offsets and positions are centimeters.  The canonical rig has 23 joints,
13 upper-body and 9 lower-body non-root joints, and is exactly symmetric
about the X=0 plane so mirrored sequences stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple
    parent_index: tuple          # root has -1
    offsets: np.ndarray          # (J, 3) cm
    end_sites: dict = field(default_factory=dict)   # joint index -> (3,) offset
    left_right_pairs: tuple = ()
    foot_joint_indices: tuple = ()                  # (lf, lt, rf, rt)

    @property
    def num_joints(self):
        return len(self.joint_names)

    def index(self, name):
        return self.joint_names.index(name)

    def children(self, j):
        return [c for c, p in enumerate(self.parent_index) if p == j]

    def validate(self):
        roots = [j for j, p in enumerate(self.parent_index) if p < 0]
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        for j, p in enumerate(self.parent_index):
            if j > 0 and not 0 <= p < j:
                raise ValueError(f"parent of joint {j} must precede it (got {p})")
        for left, right in self.left_right_pairs:
            ln, rn = self.joint_names[left], self.joint_names[right]
            if not (ln.startswith("Left") and rn.startswith("Right") and ln[4:] == rn[5:]):
                raise ValueError(f"bad mirror pair {ln}/{rn}")
        if len(self.foot_joint_indices) != 4:
            raise ValueError("need exactly 4 foot joints (lf, lt, rf, rt)")
        return self


def derive_mirror_pairs(joint_names):
    """Pair "Left*" joints with their "Right*" counterparts by name."""
    pairs = []
    for i, name in enumerate(joint_names):
        if name.startswith("Left"):
            other = "Right" + name[4:]
            if other not in joint_names:
                raise ValueError(f"no mirror counterpart for {name}")
            pairs.append((i, joint_names.index(other)))
    return tuple(pairs)


def load_mirror_map(path):
    """Sidecar mirror map: one "LeftName RightName" pair per line."""
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            left, right = line.split()
            pairs.append((left, right))
    return pairs


# Canonical 23-joint rig.  (name, parent name, offset cm)
_CANONICAL = [
    ("Hips", None, (0.0, 0.0, 0.0)),
    ("LowerBack", "Hips", (0.0, 10.0, 0.0)),
    ("Spine", "LowerBack", (0.0, 12.0, 0.0)),
    ("Spine1", "Spine", (0.0, 12.0, 0.0)),
    ("Spine2", "Spine1", (0.0, 12.0, 0.0)),
    ("Neck", "Spine2", (0.0, 10.0, 0.0)),
    ("Head", "Neck", (0.0, 12.0, 0.0)),
    ("LeftShoulder", "Spine2", (4.0, 8.0, 0.0)),
    ("LeftArm", "LeftShoulder", (14.0, 0.0, 0.0)),
    ("LeftForeArm", "LeftArm", (26.0, 0.0, 0.0)),
    ("LeftHand", "LeftForeArm", (25.0, 0.0, 0.0)),
    ("RightShoulder", "Spine2", (-4.0, 8.0, 0.0)),
    ("RightArm", "RightShoulder", (-14.0, 0.0, 0.0)),
    ("RightForeArm", "RightArm", (-26.0, 0.0, 0.0)),
    ("RightHand", "RightForeArm", (-25.0, 0.0, 0.0)),
    ("LeftUpLeg", "Hips", (9.0, -4.0, 0.0)),
    ("LeftLeg", "LeftUpLeg", (0.0, -42.0, 0.0)),
    ("LeftFoot", "LeftLeg", (0.0, -40.0, 0.0)),
    ("LeftToe", "LeftFoot", (0.0, -7.0, 12.0)),
    ("RightUpLeg", "Hips", (-9.0, -4.0, 0.0)),
    ("RightLeg", "RightUpLeg", (0.0, -42.0, 0.0)),
    ("RightFoot", "RightLeg", (0.0, -40.0, 0.0)),
    ("RightToe", "RightFoot", (0.0, -7.0, 12.0)),
]

_CANONICAL_END_SITES = {
    "Head": (0.0, 18.0, 0.0),
    "LeftHand": (9.0, 0.0, 0.0),
    "RightHand": (-9.0, 0.0, 0.0),
    "LeftToe": (0.0, 0.0, 8.0),
    "RightToe": (0.0, 0.0, 8.0),
}

UPPER_JOINTS = (
    "Spine", "Spine1", "Spine2", "Neck", "Head",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand",
)
LOWER_JOINTS = (
    "LowerBack",
    "LeftUpLeg", "LeftLeg", "LeftFoot", "LeftToe",
    "RightUpLeg", "RightLeg", "RightFoot", "RightToe",
)

# Standing root height implied by the leg chain: 4 + 42 + 40 + 7 = 93.
STANDING_ROOT_HEIGHT = 93.0


def canonical_skeleton():
    names = tuple(n for n, _, _ in _CANONICAL)
    parents = tuple(-1 if p is None else names.index(p) for _, p, _ in _CANONICAL)
    offsets = np.array([o for _, _, o in _CANONICAL])
    ends = {names.index(n): np.array(o) for n, o in _CANONICAL_END_SITES.items()}
    feet = tuple(names.index(n) for n in ("LeftFoot", "LeftToe", "RightFoot", "RightToe"))
    return Skeleton(
        joint_names=names,
        parent_index=parents,
        offsets=offsets,
        end_sites=ends,
        left_right_pairs=derive_mirror_pairs(names),
        foot_joint_indices=feet,
    ).validate()


def forward_kinematics(skeleton, rotations, root_position, unit_tol=1e-4):
    """World joint positions from local rotations and the root position.

    rotations: (..., J, 4) unit quaternions (root's is its world rotation);
    root_position: (..., 3).  Returns (..., J, 3).
    """
    rotations = np.asarray(rotations, dtype=float)
    root_position = np.asarray(root_position, dtype=float)
    norms = np.linalg.norm(rotations, axis=-1)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        worst = float(np.abs(norms - 1.0).max())
        raise ValueError(f"non-unit quaternion in pose (|1-norm| up to {worst:.2e})")

    J = skeleton.num_joints
    lead = rotations.shape[:-2]
    globals_q = np.empty(lead + (J, 4))
    positions = np.empty(lead + (J, 3))
    globals_q[..., 0, :] = rotations[..., 0, :]
    positions[..., 0, :] = root_position
    for j in range(1, J):
        p = skeleton.parent_index[j]
        positions[..., j, :] = positions[..., p, :] + quat.rotate(
            globals_q[..., p, :], skeleton.offsets[j]
        )
        globals_q[..., j, :] = quat.mul(globals_q[..., p, :], rotations[..., j, :])
    return positions


def global_rotations(skeleton, rotations):
    rotations = np.asarray(rotations, dtype=float)
    J = skeleton.num_joints
    out = np.empty_like(rotations)
    out[..., 0, :] = rotations[..., 0, :]
    for j in range(1, J):
        p = skeleton.parent_index[j]
        out[..., j, :] = quat.mul(out[..., p, :], rotations[..., j, :])
    return out
