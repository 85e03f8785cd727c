"""Training loss terms and their weighted sum.

All terms average over batch and frames.  Targets arrive as numpy arrays;
predictions are graph Tensors so gradients flow to the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz


@dataclass
class LossWeights:
    smoothness: float = 10.0
    contact: float = 5.0
    fk: float = 5.0
    consistency: float = 1.0
    trajectory: float = 1.0

    def validate(self):
        if min(self.smoothness, self.contact, self.fk, self.consistency, self.trajectory) < 0:
            raise ValueError("loss weights must be non-negative")
        return self


@dataclass
class LossBreakdown:
    gaussian: float
    smoothness: float
    contact: float
    fk: float
    consistency: float
    consistency_feature: float
    consistency_root: float
    trajectory: float
    total: float

    def as_dict(self):
        return {
            "gaussian": self.gaussian,
            "smoothness": self.smoothness,
            "contact": self.contact,
            "fk": self.fk,
            "consistency": self.consistency,
            "consistency_feature": self.consistency_feature,
            "consistency_root": self.consistency_root,
            "trajectory": self.trajectory,
            "total": self.total,
        }


def gaussian_loss(target, mean, logstd, floor=1e-4):
    """Mean over frames of the summed per-dimension Gaussian NLL."""
    nll = tz.gaussian_nll(mean, logstd, target, floor)
    return tz.tensor_mean(tz.tensor_sum(nll, axis=-1))


def smoothness_loss(mean):
    """Mean Euclidean norm of the second temporal difference of the
    predicted means; zero for constant or linear-in-time trajectories."""
    if mean.shape[-2] < 3:
        raise ValueError("smoothness needs at least 3 frames")
    second = tz.add(tz.sub(mean[..., :-2, :], tz.mul(mean[..., 1:-1, :], 2.0)), mean[..., 2:, :])
    return tz.tensor_mean(tz.l2norm(second, axis=-1))


def foot_contact_loss(labels, logits):
    """Mean binary cross-entropy over frames and the four contact channels."""
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("contact logits contain non-finite values")
    labels = np.asarray(labels, dtype=logits.data.dtype)
    # max(x,0) - x*y + log(1 + exp(-|x|)): the numerically stable BCE
    stable = tz.add(
        tz.sub(tz.relu(logits), tz.mul(logits, labels)),
        tz.log(tz.add(tz.exp(tz.mul(tz.absolute(logits), -1.0)), 1.0)),
    )
    return tz.tensor_mean(stable)


def fk_loss(pred_feet, gt_feet, contact_probs):
    """Foot placement accuracy plus a contact-gated anti-slide term.

    pred_feet: (B, T, 4, 3) Tensor from the FK layer; gt_feet: same shape,
    ground truth; contact_probs: (B, T, 4) Tensor of predicted contact
    probabilities.  The second term penalizes movement of a foot between
    consecutive frames weighted by both frames' contact probabilities.
    """
    B, T = pred_feet.shape[0], pred_feet.shape[1]
    if T < 2:
        raise ValueError("the anti-slide term needs at least 2 frames")
    gt = np.asarray(gt_feet, dtype=pred_feet.data.dtype)
    flat = tz.reshape(tz.sub(pred_feet, gt), (B, T, 12))
    term1 = tz.tensor_mean(tz.l2norm(flat, axis=-1))

    step = tz.absolute(tz.sub(pred_feet[:, :-1], pred_feet[:, 1:]))
    step = tz.tensor_sum(step, axis=-1)                       # (B, T-1, 4) L1 per foot
    gate = tz.mul(contact_probs[:, :-1], contact_probs[:, 1:])
    term2 = tz.tensor_mean(tz.tensor_sum(tz.mul(gate, step), axis=-1))
    return tz.add(term1, term2)


def consistency_loss(root_slices, root_decoded, gt_root):
    """Couple the two body parts through their shared root-slice latents.

    Returns (total, feature_term, root_term) where total = feature + 2*root.
    """
    if not root_slices or not root_decoded:
        raise ValueError("consistency terms are training-only (no root slices given)")
    feat = tz.add(
        tz.tensor_mean(tz.l2norm(tz.sub(root_slices["up_shallow"], root_slices["low_shallow"]), axis=-1)),
        tz.tensor_mean(tz.l2norm(tz.sub(root_slices["up_deep"], root_slices["low_deep"]), axis=-1)),
    )
    gt = np.asarray(gt_root)
    root = None
    for key in ("up_shallow", "low_shallow", "up_deep", "low_deep"):
        term = tz.tensor_mean(tz.l2norm(tz.sub(root_decoded[key], gt), axis=-1))
        root = term if root is None else tz.add(root, term)
    total = tz.add(feat, tz.mul(root, 2.0))
    return total, feat, root


def trajectory_loss(pos_target, pos_mean, pos_logstd, dir_target, dir_mean, dir_logstd, floor=1e-4):
    """Gaussian NLL over the predicted future path and facing signals."""
    pos = tz.tensor_sum(tz.gaussian_nll(pos_mean, pos_logstd, pos_target, floor), axis=-1)
    direc = tz.tensor_sum(tz.gaussian_nll(dir_mean, dir_logstd, dir_target, floor), axis=-1)
    return tz.tensor_mean(tz.add(pos, direc))


def total_loss(gaussian, smoothness, contact, fk, consistency, trajectory, weights):
    """Weighted sum; `consistency` is the (total, feature, root) triple."""
    con_total, con_feat, con_root = consistency
    total = tz.add(
        gaussian,
        tz.add(
            tz.mul(smoothness, weights.smoothness),
            tz.add(
                tz.mul(contact, weights.contact),
                tz.add(
                    tz.mul(fk, weights.fk),
                    tz.add(
                        tz.mul(con_total, weights.consistency),
                        tz.mul(trajectory, weights.trajectory),
                    ),
                ),
            ),
        ),
    )
    breakdown = LossBreakdown(
        gaussian=gaussian.item(),
        smoothness=smoothness.item(),
        contact=contact.item(),
        fk=fk.item(),
        consistency=con_total.item(),
        consistency_feature=con_feat.item(),
        consistency_root=con_root.item(),
        trajectory=trajectory.item(),
        total=total.item(),
    )
    return total, breakdown
