"""BVH reading and writing plus clip-level transforms (resample, mirror).

Supported channel layouts: root with 3 position + 3 rotation channels,
other joints with 3 rotation channels, rotation order ZYX or ZXY.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import quat
from .skeleton import Skeleton, derive_mirror_pairs


class BvhSyntaxError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


@dataclass
class RawClip:
    skeleton: Skeleton
    rotations: np.ndarray       # (T, J, 4) unit quaternions, root's is global
    root_positions: np.ndarray  # (T, 3) cm
    frame_time: float           # seconds per frame
    rotation_order: str = "ZYX"

    @property
    def num_frames(self):
        return self.rotations.shape[0]

    @property
    def fps(self):
        return 1.0 / self.frame_time

    def validate(self, tol=1e-6):
        if self.frame_time <= 0:
            raise ValueError("frame_time must be positive")
        norms = np.linalg.norm(self.rotations, axis=-1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError("clip contains non-unit quaternions")
        return self


class _Tokens:
    def __init__(self, text):
        self.items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0

    def peek(self):
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    def next(self, expect=None):
        if self.pos >= len(self.items):
            raise BvhSyntaxError("unexpected end of file")
        tok, line = self.items[self.pos]
        self.pos += 1
        if expect is not None and tok != expect:
            raise BvhSyntaxError(f"expected '{expect}', got '{tok}'", line)
        return tok

    @property
    def line(self):
        idx = min(self.pos, len(self.items) - 1)
        return self.items[idx][1]


_ROT_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POS_CHANNELS = ("Xposition", "Yposition", "Zposition")


def parse_bvh(text):
    """Parse BVH text into a RawClip."""
    toks = _Tokens(text)
    toks.next("HIERARCHY")

    names, parents, offsets, channel_specs, end_sites = [], [], [], [], {}

    def parse_joint(parent, kind):
        name = toks.next()
        idx = len(names)
        names.append(name)
        parents.append(parent)
        toks.next("{")
        toks.next("OFFSET")
        offsets.append([float(toks.next()) for _ in range(3)])
        toks.next("CHANNELS")
        n = int(toks.next())
        chans = [toks.next() for _ in range(n)]
        channel_specs.append(_check_channels(chans, kind == "ROOT", toks.line))
        while True:
            tok = toks.next()
            if tok == "}":
                return
            if tok == "JOINT":
                parse_joint(idx, "JOINT")
            elif tok == "End":
                toks.next("Site")
                toks.next("{")
                toks.next("OFFSET")
                end_sites[idx] = np.array([float(toks.next()) for _ in range(3)])
                toks.next("}")
            else:
                raise BvhSyntaxError(f"unexpected token '{tok}' in joint body", toks.line)

    toks.next("ROOT")
    parse_joint(-1, "ROOT")

    orders = {spec[1] for spec in channel_specs}
    if len(orders) != 1:
        raise BvhSyntaxError(f"mixed rotation orders {sorted(orders)} are unsupported")
    order = orders.pop()

    toks.next("MOTION")
    toks.next("Frames:")
    num_frames = int(toks.next())
    toks.next("Frame")
    toks.next("Time:")
    frame_time = float(toks.next())

    values_per_frame = sum(6 if has_pos else 3 for has_pos, _ in channel_specs)
    flat = []
    while toks.peek() is not None:
        flat.append(float(toks.next()))
    if len(flat) != num_frames * values_per_frame:
        raise BvhSyntaxError(
            f"motion data has {len(flat)} values, header implies "
            f"{num_frames * values_per_frame} ({num_frames} frames x {values_per_frame})"
        )
    data = np.array(flat).reshape(num_frames, values_per_frame)

    J = len(names)
    rotations = np.empty((num_frames, J, 4))
    root_positions = np.zeros((num_frames, 3))
    col = 0
    for j, (has_pos, _) in enumerate(channel_specs):
        if has_pos:
            root_positions = data[:, col:col + 3]
            col += 3
        rotations[:, j, :] = quat.euler_deg_to_quat(data[:, col:col + 3], order)
        col += 3

    try:
        pairs = derive_mirror_pairs(tuple(names))
    except ValueError:
        pairs = ()
    feet = tuple(
        names.index(n)
        for n in ("LeftFoot", "LeftToe", "RightFoot", "RightToe")
        if n in names
    )
    skel = Skeleton(
        joint_names=tuple(names),
        parent_index=tuple(parents),
        offsets=np.array(offsets),
        end_sites=end_sites,
        left_right_pairs=pairs,
        foot_joint_indices=feet if len(feet) == 4 else (),
    )
    return RawClip(
        skeleton=skel,
        rotations=rotations,
        root_positions=np.array(root_positions, dtype=float),
        frame_time=frame_time,
        rotation_order=order,
    ).validate()


def _check_channels(chans, is_root, line):
    if is_root and len(chans) == 6:
        if tuple(chans[:3]) != _POS_CHANNELS:
            raise BvhSyntaxError(f"unsupported root position channels {chans[:3]}", line)
        rot = chans[3:]
        has_pos = True
    elif len(chans) == 3:
        rot = chans
        has_pos = False
    else:
        raise BvhSyntaxError(f"unsupported channel count {len(chans)}", line)
    try:
        order = "".join(_ROT_CHANNELS[c] for c in rot)
    except KeyError:
        raise BvhSyntaxError(f"unsupported channels {rot}", line) from None
    if order not in ("ZYX", "ZXY"):
        raise BvhSyntaxError(f"unsupported rotation order {order} (only ZYX, ZXY)", line)
    return has_pos, order


def write_bvh(clip):
    """Serialize a RawClip back to BVH text."""
    skel = clip.skeleton
    order = clip.rotation_order
    rot_channels = " ".join(f"{axis}rotation" for axis in order)
    lines = ["HIERARCHY"]

    def emit(j, depth):
        indent = "\t" * depth
        kind = "ROOT" if j == 0 else "JOINT"
        lines.append(f"{indent}{kind} {skel.joint_names[j]}")
        lines.append(f"{indent}{{")
        off = skel.offsets[j]
        lines.append(f"{indent}\tOFFSET {off[0]:.6f} {off[1]:.6f} {off[2]:.6f}")
        if j == 0:
            lines.append(
                f"{indent}\tCHANNELS 6 Xposition Yposition Zposition {rot_channels}"
            )
        else:
            lines.append(f"{indent}\tCHANNELS 3 {rot_channels}")
        kids = skel.children(j)
        for c in kids:
            emit(c, depth + 1)
        if not kids:
            end = skel.end_sites.get(j, np.zeros(3))
            lines.append(f"{indent}\tEnd Site")
            lines.append(f"{indent}\t{{")
            lines.append(f"{indent}\t\tOFFSET {end[0]:.6f} {end[1]:.6f} {end[2]:.6f}")
            lines.append(f"{indent}\t}}")
        lines.append(f"{indent}}}")

    emit(0, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {clip.num_frames}")
    lines.append(f"Frame Time: {clip.frame_time:.7f}")

    eulers = quat.quat_to_euler_deg(clip.rotations, order)  # (T, J, 3)
    for t in range(clip.num_frames):
        row = list(clip.root_positions[t]) + list(eulers[t].reshape(-1))
        lines.append(" ".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def resample(clip, target_fps):
    """Integer decimation to a lower (or equal) frame rate."""
    source_fps = clip.fps
    ratio = source_fps / target_fps
    step = int(round(ratio))
    if abs(ratio - step) > 1e-6 or step < 1:
        raise ValueError(
            f"resampling {source_fps:g} -> {target_fps:g} fps is not an integer decimation"
        )
    if step == 1:
        return clip
    return replace(
        clip,
        rotations=clip.rotations[::step].copy(),
        root_positions=clip.root_positions[::step].copy(),
        frame_time=clip.frame_time * step,
    )


_MIRROR_Q = np.array([1.0, 1.0, -1.0, -1.0])  # conjugation by diag(-1,1,1)


def mirror(clip):
    """Reflect the clip across the sagittal (X=0) plane."""
    skel = clip.skeleton
    if not skel.left_right_pairs:
        raise ValueError("skeleton has no left/right mirror pairs")
    paired = {i for pair in skel.left_right_pairs for i in pair}
    for j, name in enumerate(skel.joint_names):
        if j not in paired and (name.startswith("Left") or name.startswith("Right")):
            raise ValueError(f"joint {name} has no mirror pair")

    rot = clip.rotations * _MIRROR_Q
    out = rot.copy()
    for left, right in skel.left_right_pairs:
        out[:, left] = rot[:, right]
        out[:, right] = rot[:, left]
    pos = clip.root_positions * np.array([-1.0, 1.0, 1.0])
    return replace(clip, rotations=out, root_positions=pos)


def clips_equal(a, b, tol=1e-6):
    """Channel-level equality; rotations compared up to quaternion sign."""
    if a.num_frames != b.num_frames:
        return False
    if abs(a.frame_time - b.frame_time) > tol:
        return False
    if np.abs(a.root_positions - b.root_positions).max() > tol:
        return False
    dots = np.abs(np.sum(a.rotations * b.rotations, axis=-1))
    return bool(np.all(dots >= 1.0 - tol))
