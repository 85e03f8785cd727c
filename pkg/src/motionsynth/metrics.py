"""Quantitative motion quality measures and the evaluation protocol.

Body movement (deg/frame) and average foot sliding (cm/frame) describe a
single sequence; windowed structural similarity and mean per-joint position
error compare a generated sequence against its ground truth.  Evaluation
re-synthesizes each test sequence from its first frames using control
signals extracted from the ground truth, then scores the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .features import detect_contacts, extract_controls
from .skeleton import forward_kinematics
from .synthesis import SessionConfig, SynthesisSession, run_session

SSIM_WINDOW = 11
FOOT_HEIGHT_DEFAULTS = (10.85, 1.55, 10.85, 1.55)  # cm: lf, lt, rf, rt


def joint_angle_tracks(clip):
    """(T, J, 3) per-joint axis-angle tracks in degrees, sign-continuous
    along time."""
    T, J = clip.rotations.shape[:2]
    per_joint = clip.rotations.transpose(1, 0, 2)
    aligned = np.stack([quat.align_hemisphere(track) for track in per_joint])
    return np.rad2deg(quat.to_expmap(aligned)).transpose(1, 0, 2)


def body_movement(angles_deg):
    """Mean summed absolute per-joint angle change, deg/frame."""
    angles = np.asarray(angles_deg, dtype=float)
    if angles.shape[0] < 2:
        raise ValueError("body movement needs at least 2 frames")
    steps = np.abs(np.diff(angles, axis=0)).sum(axis=(1, 2))
    return float(steps.mean())


def foot_tracks(clip):
    """(heights (T, 4), xz_speeds (T-1, 4)) for (lf, lt, rf, rt)."""
    world = forward_kinematics(clip.skeleton, clip.rotations, clip.root_positions)
    feet = world[:, list(clip.skeleton.foot_joint_indices)]
    heights = feet[:, :, 1]
    speeds = np.linalg.norm(np.diff(feet[:, :, [0, 2]], axis=0), axis=-1)
    return heights, speeds


def average_foot_sliding(speeds, heights, thresholds=FOOT_HEIGHT_DEFAULTS):
    """Ground-plane speed weighted by closeness to the ground.

    speeds: (T-1, 4) cm/frame; heights: (T, 4) cm (the later frame of each
    speed pair is used); the height/threshold exponent clamps to [0, 1].
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(thresholds <= 0):
        raise ValueError("height thresholds must be positive")
    speeds = np.asarray(speeds, dtype=float)
    heights = np.asarray(heights, dtype=float)
    if speeds.shape[0] + 1 != heights.shape[0]:
        raise ValueError("speeds must have one row fewer than heights")
    h = heights[1:]
    weight = 2.0 - 2.0 ** np.clip(h / thresholds, 0.0, 1.0)
    return float((speeds * weight).sum() / (4 * speeds.shape[0]))


def motion_ssim(generated, ground_truth, window=SSIM_WINDOW, k1=0.01, k2=0.03,
                corrected=True):
    """Windowed structural similarity of angle tracks, averaged over
    1-frame-stride windows and channels.

    Both sequences are shifted by the ground truth's minimum; the dynamic
    range L is the ground truth's max-min.  With `corrected` the covariance
    term carries the standard factor 2 (so identical sequences score exactly
    1); the uncorrected variant reproduces the single-sigma form.
    """
    gen = np.asarray(generated, dtype=float).reshape(np.shape(generated)[0], -1)
    gt = np.asarray(ground_truth, dtype=float).reshape(np.shape(ground_truth)[0], -1)
    if gen.shape != gt.shape:
        raise ValueError("sequences must have equal shapes")
    T = gen.shape[0]
    if T < window:
        raise ValueError(f"need at least {window} frames")
    shift = gt.min()
    L = gt.max() - gt.min()
    if L <= 0:
        L = 1.0
    gen = gen - shift
    gt = gt - shift
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2

    n_windows = T - window + 1
    idx = np.arange(window)[None, :] + np.arange(n_windows)[:, None]
    gw = gen[idx]   # (W, window, C)
    tw = gt[idx]
    mu1 = gw.mean(axis=1)
    mu2 = tw.mean(axis=1)
    var1 = gw.var(axis=1)
    var2 = tw.var(axis=1)
    cov = ((gw - mu1[:, None, :]) * (tw - mu2[:, None, :])).mean(axis=1)
    cov_term = 2.0 * cov if corrected else cov
    ssim = ((2 * mu1 * mu2 + c1) * (cov_term + c2)) / (
        (mu1**2 + mu2**2 + c1) * (var1 + var2 + c2)
    )
    return float(ssim.mean())


def mpjpe(generated_positions, ground_truth_positions):
    """Mean Euclidean distance over frames and joints (root-relative, cm)."""
    gen = np.asarray(generated_positions, dtype=float)
    gt = np.asarray(ground_truth_positions, dtype=float)
    if gen.shape != gt.shape:
        raise ValueError("position arrays must have equal shapes")
    return float(np.linalg.norm(gen - gt, axis=-1).mean())


def root_relative_positions(clip):
    world = forward_kinematics(clip.skeleton, clip.rotations, clip.root_positions)
    return world - world[:, :1, :]


@dataclass
class MetricReport:
    per_sequence: list
    aggregate: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "metadata": self.metadata,
                "aggregate": self.aggregate,
                "per_sequence": self.per_sequence,
            },
            indent=2,
        )

    @staticmethod
    def aggregate_rows(rows):
        keys = [k for k in rows[0] if isinstance(rows[0][k], (int, float))]
        return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def sequence_metrics(generated, ground_truth, thresholds=FOOT_HEIGHT_DEFAULTS):
    """Scores for one generated clip against its aligned ground truth."""
    gen_angles = joint_angle_tracks(generated)
    gt_angles = joint_angle_tracks(ground_truth)
    heights, speeds = foot_tracks(generated)
    gt_heights, gt_speeds = foot_tracks(ground_truth)
    gen_track = generated.root_positions[:, [0, 2]]
    gt_track = ground_truth.root_positions[:, [0, 2]]
    from .trajectory import trajectory_distance

    return {
        "bm": body_movement(gen_angles),
        "bm_reference": body_movement(gt_angles),
        "afs": average_foot_sliding(speeds, heights, thresholds),
        "afs_reference": average_foot_sliding(gt_speeds, gt_heights, thresholds),
        "ssim": motion_ssim(gen_angles, gt_angles),
        "mpjpe": mpjpe(root_relative_positions(generated), root_relative_positions(ground_truth)),
        "trajectory_distance": trajectory_distance(gen_track, gt_track),
    }


def evaluate(model, stats, scheme, skel, clips, type_ids_per_clip, num_types,
             warmup=30, mode="mean", use_ik=False, seed=0, identity=False,
             metadata=None):
    """Synthesize every test clip from its warm-up frames with ground-truth
    controls and score against the original.

    With identity=True the ground truth is scored against itself (a harness
    self-check: SSIM 1, MPJPE 0)."""
    from .bvh import RawClip

    rows = []
    for ci, (clip, type_ids) in enumerate(zip(clips, type_ids_per_clip)):
        T = clip.num_frames
        gen_frames = T - warmup - 1
        if gen_frames < SSIM_WINDOW:
            raise ValueError(f"clip {ci} too short for warm-up {warmup} plus a window")
        gt_part = RawClip(
            skeleton=clip.skeleton,
            rotations=clip.rotations[warmup + 1:],
            root_positions=clip.root_positions[warmup + 1:],
            frame_time=clip.frame_time,
        )
        if identity:
            generated = gt_part
        else:
            session = SynthesisSession(
                model, stats, scheme, skel,
                SessionConfig(mode=mode, use_ik=use_ik, seed=seed + ci, warmup=warmup),
            )
            session.seed_from_clip(clip, type_ids, num_types, warmup)
            counter = {"n": warmup - 1}  # the newest buffered frame's index

            def next_control(_session):
                counter["n"] += 1
                n = min(counter["n"], T - 1)
                return extract_controls(clip, type_ids, n, num_types)

            result = run_session(session, gen_frames, next_control)
            generated = result.clip
        row = {"sequence": ci, "frames": gen_frames}
        row.update(sequence_metrics(generated, gt_part))
        rows.append(row)

    report = MetricReport(
        per_sequence=rows,
        aggregate=MetricReport.aggregate_rows(rows),
        metadata=metadata or {},
    )
    return report
