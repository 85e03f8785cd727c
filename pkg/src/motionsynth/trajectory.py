"""User trajectories on the ground plane and their mapping to control
signals.

A trajectory is an ordered list of parts; each part is a densely sampled
2-D polyline with a motion type and a scalar speed.  Time parameterization
follows arc length at each part's speed; motion-type signals cross-fade
linearly over a 40-frame window after each type boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .features import CONTROL_OFFSETS, ControlRecord

TYPE_BLEND_FRAMES = 40


@dataclass
class TrajectoryPart:
    points: np.ndarray   # (N, 2) XZ, cm
    type_id: int
    speed: float         # cm/s


class TrajectorySpec:
    def __init__(self, parts):
        if not parts:
            raise ValueError("trajectory needs at least one part")
        self.parts = []
        for part in parts:
            pts = np.asarray(part.points, dtype=float).reshape(-1, 2)
            if pts.shape[0] < 2:
                raise ValueError("each trajectory part needs at least 2 points")
            if part.speed <= 0:
                raise ValueError("part speeds must be positive")
            self.parts.append(TrajectoryPart(pts, int(part.type_id), float(part.speed)))
        for prev, nxt in zip(self.parts, self.parts[1:]):
            if np.linalg.norm(prev.points[-1] - nxt.points[0]) > 1e-6:
                raise ValueError("consecutive trajectory parts must share an endpoint")
        self._build_tables()

    def _build_tables(self):
        self._part_arcs = []
        self._durations = []
        for part in self.parts:
            seg = np.linalg.norm(np.diff(part.points, axis=0), axis=1)
            arcs = np.concatenate([[0.0], np.cumsum(seg)])
            self._part_arcs.append(arcs)
            self._durations.append(arcs[-1] / part.speed)
        self._starts = np.concatenate([[0.0], np.cumsum(self._durations)])

    @property
    def duration(self):
        """Total traversal time in seconds."""
        return float(self._starts[-1])

    def sample(self, t):
        """(position (2,), unit tangent (2,)) at time t seconds; the end
        point and final tangent are held past the end."""
        t = float(t)
        if t <= 0.0:
            part, arcs = self.parts[0], self._part_arcs[0]
            return part.points[0].copy(), self._tangent(part, arcs, 0.0)
        if t >= self.duration:
            part, arcs = self.parts[-1], self._part_arcs[-1]
            return part.points[-1].copy(), self._tangent(part, arcs, arcs[-1])
        i = int(np.searchsorted(self._starts, t, side="right") - 1)
        part, arcs = self.parts[i], self._part_arcs[i]
        arc = (t - self._starts[i]) * part.speed
        seg = int(np.clip(np.searchsorted(arcs, arc, side="right") - 1, 0, len(arcs) - 2))
        seg_len = arcs[seg + 1] - arcs[seg]
        frac = 0.0 if seg_len <= 0 else (arc - arcs[seg]) / seg_len
        pos = part.points[seg] * (1 - frac) + part.points[seg + 1] * frac
        return pos, self._tangent(part, arcs, arc)

    @staticmethod
    def _tangent(part, arcs, arc):
        seg = int(np.clip(np.searchsorted(arcs, arc, side="right") - 1, 0, len(arcs) - 2))
        d = part.points[seg + 1] - part.points[seg]
        n = np.linalg.norm(d)
        if n < 1e-9:
            return np.array([0.0, 1.0])
        return d / n

    def type_weights(self, t, num_types, fps=60, end_type=None):
        """One-hot (or blended) type row at time t seconds."""
        weights = np.zeros(num_types)
        if t >= self.duration and end_type is not None:
            weights[end_type] = 1.0
            return weights
        t = min(max(t, 0.0), self.duration)
        i = int(np.clip(np.searchsorted(self._starts, t, side="right") - 1, 0, len(self.parts) - 1))
        weights[self.parts[i].type_id] = 1.0
        if i > 0 and self.parts[i - 1].type_id != self.parts[i].type_id:
            frames_in = (t - self._starts[i]) * fps
            if frames_in < TYPE_BLEND_FRAMES:
                blend = frames_in / TYPE_BLEND_FRAMES
                weights[:] = 0.0
                weights[self.parts[i - 1].type_id] = 1.0 - blend
                weights[self.parts[i].type_id] = blend
        return weights

    def to_json(self):
        return json.dumps(
            {
                "parts": [
                    {"points": p.points.tolist(), "type_id": p.type_id, "speed": p.speed}
                    for p in self.parts
                ]
            }
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(
            [
                TrajectoryPart(np.asarray(p["points"]), p["type_id"], p["speed"])
                for p in raw["parts"]
            ]
        )


def trajectory_controls(spec, t_frames, yaw, root_xz, skeleton_pose, num_types,
                        fps=60, end_type=None):
    """ControlRecord for a character at trajectory time t_frames (frames).

    Future positions/directions are expressed in the character's current
    root frame defined by (yaw, root_xz)."""
    c, s = np.cos(-yaw), np.sin(-yaw)
    rot = np.array([[c, s], [-s, c]])  # XZ rotation by -yaw

    positions = np.empty((len(CONTROL_OFFSETS), 2))
    directions = np.empty((len(CONTROL_OFFSETS), 2))
    types = np.empty((len(CONTROL_OFFSETS), num_types))
    for row, off in enumerate(CONTROL_OFFSETS):
        t = (t_frames + off) / fps
        pos, tan = spec.sample(t)
        positions[row] = rot @ (pos - np.asarray(root_xz))
        directions[row] = rot @ tan
        norm = np.linalg.norm(directions[row])
        directions[row] = directions[row] / norm if norm > 1e-9 else np.array([0.0, 1.0])
        types[row] = spec.type_weights(t, num_types, fps, end_type)
    return ControlRecord(
        skeleton_pose=np.asarray(skeleton_pose, dtype=float).reshape(-1),
        type_weights=types,
        future_positions=positions,
        future_directions=directions,
    )


def point_to_polyline_distance(points, polyline):
    """Distance from each point (N, 2) to the nearest polyline segment."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    poly = np.asarray(polyline, dtype=float).reshape(-1, 2)
    if poly.shape[0] == 0:
        raise ValueError("empty polyline")
    if poly.shape[0] == 1:
        return np.linalg.norm(points - poly[0], axis=1)
    a = poly[:-1][None, :, :]          # (1, M-1, 2)
    b = poly[1:][None, :, :]
    p = points[:, None, :]             # (N, 1, 2)
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    d = np.linalg.norm(p - closest, axis=-1)
    return d.min(axis=1)


def trajectory_distance(track_xz, polyline):
    """Mean closest distance (cm/frame average) of a root track to a path."""
    d = point_to_polyline_distance(track_xz, polyline)
    if d.size == 0:
        raise ValueError("empty track")
    return float(d.mean())


def spec_polyline(spec):
    return np.concatenate([p.points for p in spec.parts], axis=0)


def straight_spec(start_xz, direction_xz, length, type_id, speed, samples=64):
    direction = np.asarray(direction_xz, dtype=float)
    direction = direction / np.linalg.norm(direction)
    ts = np.linspace(0.0, length, samples)[:, None]
    points = np.asarray(start_xz, dtype=float) + ts * direction
    return TrajectorySpec([TrajectoryPart(points, type_id, speed)])
