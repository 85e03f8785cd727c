"""Scratch: calibrate the desk-scale overfit run (not part of the package)."""
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, "src")
from motionsynth.dataset import Manifest, MotionDataset, ingest
from motionsynth.features import LAYOUT, PartitionScheme
from motionsynth.model import ModelConfig, MotionModel
from motionsynth.skeleton import canonical_skeleton
from motionsynth.synthesis import SessionConfig, SynthesisSession, run_session
from motionsynth.synthetic import gait_clip, write_corpus
from motionsynth.trajectory import spec_polyline, straight_spec, trajectory_controls, trajectory_distance
from motionsynth.features import tpose_positions
from motionsynth.training import TrainConfig, train

root = Path("/tmp/overfit_scratch")
root.mkdir(exist_ok=True)
manifest = write_corpus(root / "corpus", [("walk", 600)])
dataset = ingest(Manifest.load(manifest), root / "cache")

skel = canonical_skeleton()
scheme = PartitionScheme(skel)
model_cfg = ModelConfig(
    d_model=32, n_heads=2, layers_per_stream=6, window=8, d_root=8,
    d_ff=64, num_types=1, contact_hidden=32, max_positions=512, dtype="float32",
)
model = MotionModel(model_cfg, scheme, rng=np.random.default_rng(0))

train_cfg = TrainConfig(
    batch_size=8, epochs=200, initial_lr=3e-4, base_stride=16,
    noise_std=0.05, seed=0, checkpoint_every=100,
)
t0 = time.time()
records = []
def prog(r):
    records.append(r)
    if r["epoch"] % 10 == 0:
        print(f"epoch {r['epoch']} total {r['total']:.2f} ({r['seconds']}s)", flush=True)
train(dataset, model, scheme, train_cfg, root / "run", progress=prog)
print("train time:", round(time.time() - t0, 1), "s")
print("loss drop:", records[0]["total"], "->", records[-1]["total"])

# teacher-forced reconstruction on a 300-frame window
seq = dataset.sequences[0]
T = 299
feats = dataset.stats.normalize_features(seq.features[:T])
ctrls = dataset.normalize_control_matrix(seq.controls[:T])
out = model.infer(feats[None], seq.labels[None, :T], ctrls[None])
pred = dataset.stats.denormalize_features(out.motion_mean.data[0])
target = seq.features[1:T + 1]
pred_pos = pred[:, LAYOUT.positions].reshape(-1, 23, 3)
gt_pos = target[:, LAYOUT.positions].reshape(-1, 23, 3)
mpjpe = np.linalg.norm(pred_pos - gt_pos, axis=-1).mean()
print("teacher-forced MPJPE:", round(float(mpjpe), 3), "cm")

logits = out.contact_logits.data[0]
pred_labels = (1 / (1 + np.exp(-logits)) > 0.5).astype(float)
acc = (pred_labels == seq.labels[1:T + 1]).mean()
print("contact accuracy:", round(float(acc), 4))

# straight-line following
session = SynthesisSession(model, dataset.stats, scheme, skel,
                           SessionConfig(mode="mean", use_ik=False, seed=0))
clip = gait_clip(600)
session.seed_from_clip(clip, np.zeros(600, dtype=int), 1, warmup=30)
yaw = session.pose.yaw
direc = np.array([np.sin(yaw), np.cos(yaw)])
spec = straight_spec(session.pose.root_position[[0, 2]], direc, 800.0, 0, 120.0)
tp = tpose_positions(skel).reshape(-1)
def ctrl(s):
    return trajectory_controls(spec, s.frame_index, s.pose.yaw,
                               s.pose.root_position[[0, 2]], tp, 1)
res = run_session(session, 300, ctrl)
dist = trajectory_distance(res.root_track, spec_polyline(spec))
print("trajectory distance:", round(dist, 3), "cm/frame")
print("TOTAL time:", round(time.time() - t0, 1), "s")
