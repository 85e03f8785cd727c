"""Dataset manifest, feature cache, type-balanced windowing, and batching.

The manifest is JSON: a list of BVH paths with per-frame-range motion-type
spans.  `ingest` parses and resamples every sequence, extracts features,
contacts, and control signals, fits normalization statistics, and stores
everything in a single cache directory (data.npz + stats.json + meta.json).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bvh import parse_bvh, resample
from .features import (
    NormStats,
    clip_features,
    control_vector,
    detect_contacts,
    extract_controls,
    tpose_positions,
)
from .skeleton import canonical_skeleton

CLIP_LEN = 300  # frames per training window


@dataclass
class Manifest:
    types: list
    fps: int
    sequences: list   # dicts: path, performer, spans [{start, end, type}]
    root: Path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path) as fh:
            raw = json.load(fh)
        return cls(
            types=list(raw["types"]),
            fps=int(raw.get("fps", 60)),
            sequences=raw["sequences"],
            root=path.parent,
        )

    def type_id(self, name):
        return self.types.index(name)


@dataclass
class Sequence:
    features: np.ndarray        # (N, 276) raw units
    labels: np.ndarray          # (N, 4)
    controls: np.ndarray        # (N, control_dim) raw units
    type_ids: np.ndarray        # (N,)
    path: str

    def __len__(self):
        return self.features.shape[0]


def frame_types(spans, manifest, num_frames):
    ids = np.zeros(num_frames, dtype=np.int64)
    for span in spans:
        ids[span["start"]:min(span["end"], num_frames)] = manifest.type_id(span["type"])
    return ids


def ingest(manifest, cache_dir, target_fps=60, contact_heights=(12.0, 3.0, 12.0, 3.0),
           contact_speed=1.5):
    """Build the normalized dataset cache from a manifest."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    skel = canonical_skeleton()
    num_types = len(manifest.types)
    tpose = tpose_positions(skel)

    sequences = []
    all_features = []
    all_controls = []
    for entry in manifest.sequences:
        clip = parse_bvh((manifest.root / entry["path"]).read_text())
        if abs(clip.fps - target_fps) > 0.5:
            clip = resample(clip, target_fps)
        step = max(1, int(round(manifest.fps / target_fps)))
        types_raw = frame_types(entry["spans"], manifest, clip.num_frames * step)[::step]
        types_raw = types_raw[: clip.num_frames]

        feats = clip_features(clip)
        labels = detect_contacts(clip, contact_heights, contact_speed)[1:]
        controls = np.stack(
            [
                control_vector(extract_controls(clip, types_raw, n, num_types, tpose))
                for n in range(1, clip.num_frames)
            ]
        )
        sequences.append(
            Sequence(
                features=feats,
                labels=labels,
                controls=controls,
                type_ids=types_raw[1:],
                path=str(entry["path"]),
            )
        )
        all_features.append(feats)
        all_controls.append(controls)

    stacked = np.concatenate(all_features, axis=0)
    records = _control_records_from_matrix(np.concatenate(all_controls, axis=0), num_types)
    stats = NormStats.fit(stacked, records, skel.joint_names)
    stats.save(cache_dir / "stats.json")

    arrays = {}
    for i, seq in enumerate(sequences):
        arrays[f"seq{i}_features"] = seq.features
        arrays[f"seq{i}_labels"] = seq.labels
        arrays[f"seq{i}_controls"] = seq.controls
        arrays[f"seq{i}_types"] = seq.type_ids
    np.savez_compressed(cache_dir / "data.npz", **arrays)
    meta = {
        "types": manifest.types,
        "fps": target_fps,
        "num_sequences": len(sequences),
        "paths": [str((manifest.root / s.path).resolve()) for s in sequences],
        "contact_heights": list(contact_heights),
        "contact_speed": contact_speed,
    }
    (cache_dir / "meta.json").write_text(json.dumps(meta, indent=2))
    return MotionDataset(sequences, stats, manifest.types, meta)


class _ControlView:
    """Lightweight stand-in giving NormStats.fit the record interface."""

    def __init__(self, vec, num_types):
        J3 = 69
        k = 6 * num_types
        self.skeleton_pose = vec[:J3]
        self.type_weights = vec[J3:J3 + k].reshape(6, num_types)
        self.future_positions = vec[J3 + k:J3 + k + 12].reshape(6, 2)
        self.future_directions = vec[J3 + k + 12:].reshape(6, 2)


def _control_records_from_matrix(matrix, num_types):
    return [_ControlView(row, num_types) for row in matrix]


class MotionDataset:
    def __init__(self, sequences, stats, types, meta=None):
        self.sequences = sequences
        self.stats = stats
        self.types = list(types)
        self.meta = meta or {}

    @classmethod
    def open(cls, cache_dir):
        cache_dir = Path(cache_dir)
        meta = json.loads((cache_dir / "meta.json").read_text())
        stats = NormStats.load(cache_dir / "stats.json")
        data = np.load(cache_dir / "data.npz")
        sequences = []
        for i in range(meta["num_sequences"]):
            sequences.append(
                Sequence(
                    features=data[f"seq{i}_features"],
                    labels=data[f"seq{i}_labels"],
                    controls=data[f"seq{i}_controls"],
                    type_ids=data[f"seq{i}_types"],
                    path=meta["paths"][i],
                )
            )
        return cls(sequences, stats, meta["types"], meta)

    @property
    def num_types(self):
        return len(self.types)

    def type_frame_counts(self):
        counts = np.zeros(self.num_types, dtype=np.int64)
        for seq in self.sequences:
            counts += np.bincount(seq.type_ids, minlength=self.num_types)
        return counts

    def normalize_control_matrix(self, controls):
        """Vectorized z-scoring of raw control rows; type weights pass through."""
        s = self.stats
        k = 6 * self.num_types
        out = np.array(controls, dtype=float, copy=True)
        out[..., :69] = (out[..., :69] - s.skeleton_mean) / s.skeleton_std
        out[..., 69 + k:69 + k + 12] = (
            out[..., 69 + k:69 + k + 12] - s.position_mean
        ) / s.position_std
        out[..., 69 + k + 12:] = (out[..., 69 + k + 12:] - s.direction_mean) / s.direction_std
        return out

    def control_traj_slices(self):
        k = 6 * self.num_types
        return slice(69 + k, 69 + k + 12), slice(69 + k + 12, 69 + k + 24)


def load_clips(manifest, target_fps=60):
    """Parsed, resampled clips plus per-frame type ids for every manifest
    sequence (used by the evaluation protocol)."""
    clips = []
    type_ids = []
    for entry in manifest.sequences:
        clip = parse_bvh((manifest.root / entry["path"]).read_text())
        if abs(clip.fps - target_fps) > 0.5:
            clip = resample(clip, target_fps)
        step = max(1, int(round(manifest.fps / target_fps)))
        ids = frame_types(entry["spans"], manifest, clip.num_frames * step)[::step]
        clips.append(clip)
        type_ids.append(ids[: clip.num_frames])
    return clips, type_ids


def oversample_strides(frame_counts, base_stride=4):
    """Per-type window strides balancing type representation.

    Rare types get denser sampling; stride = round(share/uniform * base),
    floored at 1.
    """
    counts = np.asarray(frame_counts, dtype=float)
    if counts.sum() <= 0:
        raise ValueError("dataset has no frames")
    uniform = 1.0 / len(counts)
    shares = counts / counts.sum()
    strides = np.round(shares / uniform * base_stride).astype(int)
    return np.maximum(strides, 1)


@dataclass
class ClipWindow:
    sequence: int
    start: int
    type_id: int


def build_clip_index(dataset, strides, clip_len=CLIP_LEN):
    """Type-strided window starts; sequences shorter than one window are
    skipped with a warning."""
    windows = []
    for si, seq in enumerate(dataset.sequences):
        n = len(seq)
        if n < clip_len:
            warnings.warn(
                f"sequence {seq.path} has {n} frames (< {clip_len}); skipped"
            )
            continue
        start = 0
        while start + clip_len <= n:
            tid = int(seq.type_ids[start])
            windows.append(ClipWindow(si, start, tid))
            start += int(strides[tid])
    return windows


@dataclass
class Batch:
    motion_in: np.ndarray       # (B, T, 276) normalized, noise-augmented
    labels_in: np.ndarray       # (B, T, 4)
    controls_in: np.ndarray     # (B, T, C) normalized
    motion_target: np.ndarray   # (B, T, 276) normalized, clean
    labels_target: np.ndarray
    traj_pos_target: np.ndarray  # (B, T, 12) normalized
    traj_dir_target: np.ndarray
    root_target: np.ndarray      # (B, T, 6) clean normalized root block
    feet_target: np.ndarray      # (B, T, 4, 3) cm


def assemble_batch(dataset, windows, scheme, rng=None, noise_std=0.0, clip_len=CLIP_LEN):
    """Teacher-forcing batch: inputs are frames [s, s+T-1), targets are the
    frames one step later.  Gaussian noise perturbs input motion only."""
    feet = canonical_skeleton().foot_joint_indices
    feet_slices = [scheme.layout.position_of(j) for j in feet]
    pos_slice, dir_slice = dataset.control_traj_slices()
    T = clip_len - 1
    mo_in, la_in, ct_in = [], [], []
    mo_tg, la_tg, tp_tg, td_tg, rb_tg, ft_tg = [], [], [], [], [], []
    for w in windows:
        seq = dataset.sequences[w.sequence]
        sl_in = slice(w.start, w.start + T)
        sl_tg = slice(w.start + 1, w.start + 1 + T)
        feats_in = dataset.stats.normalize_features(seq.features[sl_in])
        feats_tg = dataset.stats.normalize_features(seq.features[sl_tg])
        ctrl_in = dataset.normalize_control_matrix(seq.controls[sl_in])
        ctrl_tg = dataset.normalize_control_matrix(seq.controls[sl_tg])
        mo_in.append(feats_in)
        la_in.append(seq.labels[sl_in])
        ct_in.append(ctrl_in)
        mo_tg.append(feats_tg)
        la_tg.append(seq.labels[sl_tg])
        tp_tg.append(ctrl_tg[:, pos_slice])
        td_tg.append(ctrl_tg[:, dir_slice])
        rb_tg.append(feats_in[:, :6])
        raw_tg = seq.features[sl_tg]
        ft_tg.append(np.stack([raw_tg[:, s] for s in feet_slices], axis=1))  # (T, 4, 3)
    batch = Batch(
        motion_in=np.stack(mo_in),
        labels_in=np.stack(la_in),
        controls_in=np.stack(ct_in),
        motion_target=np.stack(mo_tg),
        labels_target=np.stack(la_tg),
        traj_pos_target=np.stack(tp_tg),
        traj_dir_target=np.stack(td_tg),
        root_target=np.stack(rb_tg),
        feet_target=np.stack(ft_tg),
    )
    if noise_std > 0.0 and rng is not None:
        batch.motion_in = batch.motion_in + rng.normal(
            0.0, noise_std, size=batch.motion_in.shape
        )
    return batch
