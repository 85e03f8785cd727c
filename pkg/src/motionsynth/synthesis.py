"""Real-time autoregressive generation.

A session keeps a ring buffer of the last `receptive_field_len` frames and
their control signals, integrates the world root transform exactly from
per-frame root deltas, samples (or takes the mean of) the predicted
next-frame Gaussian, and feeds predicted trajectory signals back in when
the user supplies none.  Predicted foot contacts drive an analytic leg IK
pass that plants feet; the corrected pose is display-only and never fed
back into the model.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .bvh import RawClip
from .features import (
    LAYOUT,
    ControlRecord,
    Pose,
    apply_frame,
    clip_features,
    detect_contacts,
    extract_controls,
    pose_from_clip,
    tpose_positions,
)
from .ik import leg_chain_lengths, solve_two_bone
from .model import receptive_field_len
from .skeleton import forward_kinematics, global_rotations

log = logging.getLogger(__name__)

RELEASE_FRAMES = 5  # IK lock blend-out


@dataclass
class SessionConfig:
    mode: str = "sample"          # "sample" or "mean"
    use_ik: bool = True
    seed: int = 0
    warmup: int = 30

    def validate(self):
        if self.mode not in ("sample", "mean"):
            raise ValueError(f"unknown synthesis mode {self.mode!r}")
        return self


@dataclass
class StepResult:
    features: np.ndarray          # (276,) denormalized
    contact_labels: np.ndarray    # (4,) binary
    contact_probs: np.ndarray
    pose: Pose                    # display pose (IK-corrected if enabled)
    pose_raw: Pose
    motion_mean: np.ndarray       # normalized space
    motion_std: np.ndarray
    traj_positions: np.ndarray    # (6, 2) predicted future XZ, cm, root frame
    traj_directions: np.ndarray   # (6, 2) unit
    elapsed: float                # seconds spent in this step


@dataclass
class _LegState:
    locked: bool = False
    target: np.ndarray = None
    release: int = 0


class SessionFailed(RuntimeError):
    pass


class SynthesisSession:
    def __init__(self, model, stats, scheme, skel, config=None):
        self.model = model
        self.stats = stats
        self.scheme = scheme
        self.skel = skel
        self.config = (config or SessionConfig()).validate()
        self.window = receptive_field_len(model.config)
        self.motion = deque(maxlen=self.window)    # normalized frames
        self.labels = deque(maxlen=self.window)
        self.controls = deque(maxlen=self.window)  # normalized vectors
        self.rng = np.random.default_rng(self.config.seed)
        self.pose = None
        self.frame_index = 0
        self.failed = False
        self.type_weights = None                   # (6, K) latest steering types
        self.predicted_positions = None            # (6, 2) cm, fallback source
        self.predicted_directions = None
        self.tpose = tpose_positions(skel).reshape(-1)
        self.legs = {"Left": _LegState(), "Right": _LegState()}
        self.ik_clamps = 0
        self._lengths = {side: leg_chain_lengths(skel, side) for side in ("Left", "Right")}

    # -- seeding -------------------------------------------------------------

    def seed(self, features_raw, labels, controls_raw, start_pose=None):
        """Fill the buffers with warm-up frames (raw units); the session's
        world pose is integrated from the frames unless a pose is given."""
        features_raw = np.asarray(features_raw, dtype=float)
        if features_raw.ndim != 2 or features_raw.shape[0] < 1:
            raise ValueError("need at least one warm-up frame")
        norm = self.stats.normalize_features(features_raw)
        for i in range(features_raw.shape[0]):
            self.motion.append(norm[i])
            self.labels.append(np.asarray(labels[i], dtype=float))
            self.controls.append(self._normalize_control_vector(np.asarray(controls_raw[i])))
        if start_pose is None:
            pose = _pose_from_feature(features_raw[0], self.skel)
            for i in range(1, features_raw.shape[0]):
                pose = apply_frame(pose, features_raw[i])
            start_pose = pose
        self.pose = start_pose
        self.type_weights = self._types_from_control(self.controls[-1])
        return self

    def seed_from_clip(self, clip, type_ids, num_types, warmup=None):
        w = warmup or self.config.warmup
        if clip.num_frames < w + 2:
            raise ValueError("clip too short for the requested warm-up")
        feats = clip_features(clip)[:w]
        labels = detect_contacts(clip)[1:w + 1]
        controls = np.stack(
            [
                _control_to_vector(extract_controls(clip, type_ids, n, num_types))
                for n in range(1, w + 1)
            ]
        )
        return self.seed(feats, labels, controls, pose_from_clip(clip, w))

    # -- stepping ------------------------------------------------------------

    def step(self, control=None):
        """Generate one frame.  `control` is a ControlRecord in raw units or
        None to run on the model's own predicted steering."""
        if self.failed:
            raise SessionFailed("session previously produced non-finite output")
        if not self.motion:
            raise ValueError("session has no warm-up frames")
        started = time.monotonic()

        if control is not None:
            control.validate()
            self.type_weights = control.type_weights.copy()
            self.controls[-1] = self.stats.normalize_control(control)
        out = self.model.infer(
            np.asarray(self.motion)[None],
            np.asarray(self.labels)[None],
            np.asarray(self.controls)[None],
        )
        mean = out.motion_mean.data[0, -1]
        std = np.maximum(np.exp(out.motion_logstd.data[0, -1]), self.model.config.sigma_floor)
        if self.config.mode == "sample":
            sample = mean + std * self.rng.standard_normal(mean.shape[0])
        else:
            sample = mean.copy()
        logits = out.contact_logits.data[0, -1]
        probs = 1.0 / (1.0 + np.exp(-logits))
        labels = (probs > 0.5).astype(float)
        traj_pos = self.stats.denormalize_future_positions(
            out.traj_pos_mean.data[0, -1]
        ).reshape(6, 2)
        traj_dir = self.stats.denormalize_future_directions(
            out.traj_dir_mean.data[0, -1]
        ).reshape(6, 2)
        if not (np.all(np.isfinite(sample)) and np.all(np.isfinite(traj_pos))):
            self.failed = True
            raise SessionFailed("model produced non-finite output")

        features = self.stats.denormalize_features(sample)
        pose_raw = apply_frame(self.pose, features)
        pose_display = self._apply_ik(pose_raw, labels) if self.config.use_ik else pose_raw

        self.pose = pose_raw
        self.motion.append(sample)
        self.labels.append(labels)
        self.predicted_positions = traj_pos
        self.predicted_directions = traj_dir
        self.controls.append(self._fallback_control_vector())
        self.frame_index += 1

        return StepResult(
            features=features,
            contact_labels=labels,
            contact_probs=probs,
            pose=pose_display,
            pose_raw=pose_raw,
            motion_mean=mean,
            motion_std=std,
            traj_positions=traj_pos,
            traj_directions=traj_dir,
            elapsed=time.monotonic() - started,
        )

    def _fallback_control_vector(self):
        record = ControlRecord(
            skeleton_pose=self.tpose,
            type_weights=self.type_weights,
            future_positions=self.predicted_positions,
            future_directions=_renormalize_rows(self.predicted_directions),
        )
        return self.stats.normalize_control(record)

    def _normalize_control_vector(self, raw):
        k = self.type_weights.shape[1] * 6 if self.type_weights is not None else raw.size - 69 - 24
        record = ControlRecord(
            skeleton_pose=raw[:69],
            type_weights=raw[69:69 + k].reshape(6, -1),
            future_positions=raw[69 + k:69 + k + 12].reshape(6, 2),
            future_directions=raw[69 + k + 12:].reshape(6, 2),
        )
        return self.stats.normalize_control(record)

    def _types_from_control(self, vector):
        k = self.model.config.num_types
        return np.asarray(vector[69:69 + 6 * k], dtype=float).reshape(6, k)

    # -- foot planting ---------------------------------------------------------

    def _apply_ik(self, pose, labels):
        corrected = pose.copy()
        world_pos = forward_kinematics(self.skel, pose.rotations, pose.root_position)
        world_rot = global_rotations(self.skel, pose.rotations)
        forward = quat.rotate(pose.rotations[0], np.array([0.0, 0.0, 1.0]))
        forward[1] = 0.0
        n = np.linalg.norm(forward)
        pole = forward / n if n > 1e-6 else np.array([0.0, 0.0, 1.0])

        sides = {"Left": labels[0] > 0.5 or labels[1] > 0.5,
                 "Right": labels[2] > 0.5 or labels[3] > 0.5}
        for side, in_contact in sides.items():
            state = self.legs[side]
            raw_ankle = world_pos[self.skel.index(f"{side}Foot")]
            if in_contact:
                if not state.locked:
                    state.locked = True
                    state.target = raw_ankle.copy()
                state.release = RELEASE_FRAMES
                target = state.target
            elif state.locked or state.release > 0:
                state.locked = False
                state.release -= 1
                if state.release <= 0:
                    state.release = 0
                    state.target = None
                    continue
                alpha = 1.0 - state.release / RELEASE_FRAMES
                target = (1.0 - alpha) * state.target + alpha * raw_ankle
            else:
                continue
            self._solve_leg(corrected, pose, world_pos, world_rot, side, target, pole)
        return corrected

    def _solve_leg(self, corrected, raw_pose, world_pos, world_rot, side, target, pole):
        skel = self.skel
        hip_idx = skel.index(f"{side}UpLeg")
        knee_idx = skel.index(f"{side}Leg")
        ankle_idx = skel.index(f"{side}Foot")
        upper_len, lower_len = self._lengths[side]
        hip_q, knee_q, clamped = solve_two_bone(
            world_pos[hip_idx], target, upper_len, lower_len, pole
        )
        if clamped:
            self.ik_clamps += 1
            log.warning("%s leg target out of reach at frame %d", side, self.frame_index)
        root_q = raw_pose.rotations[0]
        corrected.rotations[hip_idx] = quat.mul(quat.conjugate(root_q), hip_q)
        corrected.rotations[knee_idx] = quat.mul(quat.conjugate(hip_q), knee_q)
        # keep the foot's world orientation from the raw pose
        corrected.rotations[ankle_idx] = quat.mul(quat.conjugate(knee_q), world_rot[ankle_idx])


def _pose_from_feature(feature, skel):
    root = feature[LAYOUT.root]
    rotations = np.empty((skel.num_joints, 4))
    rotations[0] = quat.from_expmap(np.array([root[4], 0.0, root[5]]))
    rotations[1:] = quat.from_expmap(
        feature[LAYOUT.rotations].reshape(skel.num_joints - 1, 3)
    )
    return Pose(np.array([0.0, root[3], 0.0]), 0.0, rotations)


def _control_to_vector(record):
    return np.concatenate(
        [
            record.skeleton_pose,
            record.type_weights.reshape(-1),
            record.future_positions.reshape(-1),
            record.future_directions.reshape(-1),
        ]
    )


def _renormalize_rows(rows):
    rows = np.asarray(rows, dtype=float).reshape(6, 2)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    safe = np.where(norms > 1e-6, norms, 1.0)
    out = rows / safe
    out[norms[:, 0] <= 1e-6] = [0.0, 1.0]
    return out


@dataclass
class RunResult:
    clip: RawClip                # display output (IK applied if enabled)
    clip_raw: RawClip
    root_track: np.ndarray       # (N, 2) XZ
    labels: np.ndarray           # (N, 4)
    features: np.ndarray         # (N, 276) denormalized
    steps: list = field(default_factory=list)

    @property
    def fps_measured(self):
        total = sum(s.elapsed for s in self.steps)
        return len(self.steps) / total if total > 0 else float("inf")


def run_session(session, num_frames, control_fn=None, keep_steps=False):
    """Drive a session for num_frames; control_fn(session) may return a
    ControlRecord per frame (or None to free-run)."""
    rot, rot_raw, roots, roots_raw, labels, feats, steps = [], [], [], [], [], [], []
    for _ in range(num_frames):
        record = control_fn(session) if control_fn is not None else None
        result = session.step(record)
        rot.append(result.pose.rotations)
        rot_raw.append(result.pose_raw.rotations)
        roots.append(result.pose.root_position)
        roots_raw.append(result.pose_raw.root_position)
        labels.append(result.contact_labels)
        feats.append(result.features)
        if keep_steps:
            steps.append(result)
    frame_time = 1.0 / 60.0
    clip = RawClip(session.skel, np.stack(rot), np.stack(roots), frame_time)
    clip_raw = RawClip(session.skel, np.stack(rot_raw), np.stack(roots_raw), frame_time)
    track = clip_raw.root_positions[:, [0, 2]]
    return RunResult(
        clip=clip,
        clip_raw=clip_raw,
        root_track=track,
        labels=np.stack(labels),
        features=np.stack(feats),
        steps=steps,
    )
