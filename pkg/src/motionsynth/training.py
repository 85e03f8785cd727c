"""Optimization loop: AdamW with decoupled weight decay, stepped learning
rate, type-balanced clip sampling, noise augmentation, JSONL loss logs, and
periodic checkpoints."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import losses as L
from . import tensor as tz
from .dataset import CLIP_LEN, assemble_batch, build_clip_index, oversample_strides
from .features import LAYOUT
from .model import FootKinematics, MotionModel
from .skeleton import canonical_skeleton


@dataclass
class TrainConfig:
    batch_size: int = 56
    epochs: int = 2000
    initial_lr: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 500
    base_stride: int = 4
    noise_std: float = 0.05
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    checkpoint_every: int = 100
    clip_len: int = CLIP_LEN
    weights: L.LossWeights = field(default_factory=L.LossWeights)

    def validate(self):
        if min(self.batch_size, self.epochs, self.lr_decay_every, self.base_stride) < 1:
            raise ValueError("batch size, epochs, decay interval, and stride must be >= 1")
        if self.initial_lr <= 0 or not 0 < self.lr_decay_factor <= 1:
            raise ValueError("learning rate schedule must be positive and non-increasing")
        self.weights.validate()
        return self


def lr_for_epoch(config, epoch):
    """Learning rate for a 1-based epoch number."""
    steps = (epoch - 1) // config.lr_decay_every
    return config.initial_lr * config.lr_decay_factor**steps


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.data -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data)


class NonFiniteLoss(RuntimeError):
    pass


def train(dataset, model, scheme, config, out_dir, progress=None):
    """Teacher-forced training; returns the path of the final checkpoint.

    On a non-finite loss the run aborts, keeping the last good checkpoint.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    skel = canonical_skeleton()
    fk = FootKinematics(skel, LAYOUT, dataset.stats)

    strides = oversample_strides(dataset.type_frame_counts(), config.base_stride)
    index = build_clip_index(dataset, strides, config.clip_len)
    if not index:
        raise ValueError("no training windows; are all sequences shorter than one clip?")
    optimizer = AdamW(
        [p for _, p in model.named_parameters()],
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )

    log_path = out_dir / "train_log.jsonl"
    last_good = None
    with open(log_path, "a") as log:
        for epoch in range(1, config.epochs + 1):
            lr = lr_for_epoch(config, epoch)
            order = rng.permutation(len(index))
            epoch_terms = []
            started = time.monotonic()
            for lo in range(0, len(order), config.batch_size):
                ids = order[lo:lo + config.batch_size]
                batch = assemble_batch(
                    dataset, [index[i] for i in ids], scheme, rng,
                    config.noise_std, config.clip_len,
                )
                breakdown = _training_step(model, fk, batch, config, rng)
                if not math.isfinite(breakdown.total):
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch}; last good checkpoint: {last_good}"
                    )
                optimizer.step(lr)
                model.zero_grad()
                epoch_terms.append(breakdown)

            record = _mean_breakdown(epoch_terms)
            record.update(
                epoch=epoch, lr=lr, seconds=round(time.monotonic() - started, 3)
            )
            log.write(json.dumps(record) + "\n")
            log.flush()
            if progress is not None:
                progress(record)
            if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
                last_good = out_dir / f"checkpoint_{epoch:05d}.ckpt"
                model.save(last_good, extra_meta={"epoch": epoch, "train": asdict(config) | {"weights": asdict(config.weights)}})
    final = out_dir / "final.ckpt"
    model.save(final, extra_meta={"epoch": config.epochs})
    return final


def _training_step(model, fk, batch, config, rng):
    out = model.forward(
        batch.motion_in, batch.labels_in, batch.controls_in, training=True, rng=rng
    )
    floor = model.config.sigma_floor
    gaussian = L.gaussian_loss(batch.motion_target, out.motion_mean, out.motion_logstd, floor)
    smooth = L.smoothness_loss(out.motion_mean)
    contact = L.foot_contact_loss(batch.labels_target, out.contact_logits)
    probs = tz.sigmoid(out.contact_logits)
    feet = fk.foot_positions(out.motion_mean)
    fk_term = L.fk_loss(feet, batch.feet_target, probs)
    consistency = L.consistency_loss(out.root_slices, out.root_decoded, batch.root_target)
    trajectory = L.trajectory_loss(
        batch.traj_pos_target, out.traj_pos_mean, out.traj_pos_logstd,
        batch.traj_dir_target, out.traj_dir_mean, out.traj_dir_logstd, floor,
    )
    total, breakdown = L.total_loss(
        gaussian, smooth, contact, fk_term, consistency, trajectory, config.weights
    )
    tz.backward(total)
    return breakdown


def _mean_breakdown(terms):
    keys = terms[0].as_dict().keys()
    return {k: float(np.mean([t.as_dict()[k] for t in terms])) for k in keys}


def dry_run_report(dataset, model, config):
    """What training would do, without touching any weights."""
    strides = oversample_strides(dataset.type_frame_counts(), config.base_stride)
    index = build_clip_index(dataset, strides, config.clip_len)
    per_type = np.zeros(dataset.num_types, dtype=int)
    for w in index:
        per_type[w.type_id] += 1
    return {
        "clips": len(index),
        "clips_per_type": {t: int(c) for t, c in zip(dataset.types, per_type)},
        "strides": {t: int(s) for t, s in zip(dataset.types, strides)},
        "parameters": model.parameter_count(include_training_only=False),
        "parameters_with_training_heads": model.parameter_count(include_training_only=True),
        "epochs": config.epochs,
        "batch_size": config.batch_size,
    }
