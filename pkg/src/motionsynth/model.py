"""Two-part causal transformer for next-frame motion prediction.

The body is split into upper and lower parts; each part runs through a
shallow and a deep stream of locally-masked causal attention layers.  A
linear exchange between the shallow streams couples the parts, a linear
aggregation head maps the two deep streams to the next frame's Gaussian
parameters, and a small MLP on the lower-stream features predicts foot
contacts.  Both part inputs carry the same root block; the first d_root
embedding channels of every stream are reserved as that block's latent
("root slice") and are what the consistency terms read.

Training-only pieces: per-level root decoders (two-layer ReLU MLPs mapping
root slices back to the 6 root values) and the differentiable FK layer.
They never execute at inference.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tz
from .features import control_dim
from .tensor import Tensor

MOTION_SIZE = 276
TRAJ_SIZE = 12  # six future samples x 2D


@dataclass
class ModelConfig:
    d_model: int = 128
    n_heads: int = 8
    layers_per_stream: int = 6
    window: int = 8              # frames each attention position may look back over
    shallow_kernel: int = 3
    deep_kernel: int = 1
    dropout_input: float = 0.5
    dropout_spatial: float = 0.1
    d_root: int = 32             # reserved root-slice channels
    d_ff: int = 256
    num_types: int = 21
    max_positions: int = 512
    contact_hidden: int = 128
    sigma_floor: float = 1e-4
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_root >= self.d_model:
            raise ValueError("d_root must be smaller than d_model")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def receptive_field_len(config):
    """Number of past frames (inclusive of the current one) that can
    influence an output frame: both convolutions plus the stacked local
    attention windows."""
    attn_layers = 2 * config.layers_per_stream
    return (
        (config.shallow_kernel - 1)
        + (config.deep_kernel - 1)
        + config.window
        + (attn_layers - 1) * (config.window - 1)
    )


def local_causal_mask(T, window):
    """(T, T) boolean mask; position i may attend max(0, i-window+1)..i."""
    i = np.arange(T)[:, None]
    j = np.arange(T)[None, :]
    return (j <= i) & (j > i - window)


def sinusoidal_encoding(length, width, dtype=np.float32):
    position = np.arange(length)[:, None].astype(np.float64)
    div = np.exp(np.arange(0, width, 2) * (-np.log(10000.0) / width))
    pe = np.zeros((length, width))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: (width + 1) // 2])
    return pe.astype(dtype)


@dataclass
class ModelOutput:
    motion_mean: Tensor          # (B, T, 276)
    motion_logstd: Tensor
    traj_pos_mean: Tensor        # (B, T, 12)
    traj_pos_logstd: Tensor
    traj_dir_mean: Tensor
    traj_dir_logstd: Tensor
    contact_logits: Tensor       # (B, T, 4)
    root_slices: dict = field(default_factory=dict)   # training only
    root_decoded: dict = field(default_factory=dict)  # training only

    def motion_std(self, floor=1e-4):
        return np.maximum(np.exp(self.motion_logstd.data), floor)


_STREAMS = ("up_shallow", "low_shallow", "up_deep", "low_deep")


class MotionModel:
    def __init__(self, config, scheme, rng=None):
        self.config = config
        self.scheme = scheme
        self.params = {}
        rng = rng or np.random.default_rng(0)
        dt = config.np_dtype
        d = config.d_model
        ctrl = control_dim(config.num_types, scheme.layout.num_joints)
        self.control_size = ctrl
        self.pe = sinusoidal_encoding(config.max_positions, d, dt)

        def par(name, shape, fan_in=None):
            if len(shape) == 1:
                data = np.zeros(shape, dtype=dt)
            else:
                fan = fan_in if fan_in is not None else shape[-2]
                bound = np.sqrt(6.0 / (fan + shape[-1]))
                data = rng.uniform(-bound, bound, size=shape).astype(dt)
            self.params[name] = Tensor(data, requires_grad=True)
            return self.params[name]

        def ones(name, width):
            self.params[name] = Tensor(np.ones(width, dtype=dt), requires_grad=True)
            return self.params[name]

        for stream in _STREAMS:
            shallow = stream.endswith("shallow")
            if shallow:
                part = scheme.upper_size if stream.startswith("up") else scheme.lower_size
                in_width = part + ctrl
                kernel = config.shallow_kernel
            else:
                in_width = d + ctrl
                kernel = config.deep_kernel
            par(f"{stream}.conv.w", (kernel, in_width, d), fan_in=kernel * in_width)
            par(f"{stream}.conv.b", (d,))
            for i in range(config.layers_per_stream):
                base = f"{stream}.layer{i}"
                ones(f"{base}.ln1.g", d)
                par(f"{base}.ln1.b", (d,))
                par(f"{base}.attn.wqkv", (d, 3 * d))
                par(f"{base}.attn.bqkv", (3 * d,))
                par(f"{base}.attn.wo", (d, d))
                par(f"{base}.attn.bo", (d,))
                ones(f"{base}.ln2.g", d)
                par(f"{base}.ln2.b", (d,))
                par(f"{base}.ff1.w", (d, config.d_ff))
                par(f"{base}.ff1.b", (config.d_ff,))
                par(f"{base}.ff2.w", (config.d_ff, d))
                par(f"{base}.ff2.b", (d,))
            ones(f"{stream}.ln_out.g", d)
            par(f"{stream}.ln_out.b", (d,))

        par("fuse.to_upper.w", (d, d))
        par("fuse.to_upper.b", (d,))
        par("fuse.to_lower.w", (d, d))
        par("fuse.to_lower.b", (d,))

        head_out = 2 * MOTION_SIZE + 4 * TRAJ_SIZE
        par("agg.w", (2 * d, head_out))
        par("agg.b", (head_out,))

        par("contact.fc1.w", (2 * d, config.contact_hidden))
        par("contact.fc1.b", (config.contact_hidden,))
        par("contact.fc2.w", (config.contact_hidden, 4))
        par("contact.fc2.b", (4,))

        for level in ("shallow", "deep"):
            par(f"rootdec.{level}.fc1.w", (config.d_root, config.d_root))
            par(f"rootdec.{level}.fc1.b", (config.d_root,))
            par(f"rootdec.{level}.fc2.w", (config.d_root, 6))
            par(f"rootdec.{level}.fc2.b", (6,))

    # -- parameter plumbing ------------------------------------------------

    def named_parameters(self, include_training_only=True):
        for name, p in self.params.items():
            if not include_training_only and name.startswith("rootdec."):
                continue
            yield name, p

    def parameter_count(self, include_training_only=False):
        return sum(
            p.data.size for _, p in self.named_parameters(include_training_only)
        )

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def save(self, path, extra_meta=None):
        meta = {"config": asdict(self.config)}
        if extra_meta:
            meta.update(extra_meta)
        tz.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path, scheme):
        arrays, meta = tz.load_checkpoint(path)
        if "config" not in meta:
            raise ValueError("checkpoint is missing its model config")
        config = ModelConfig(**meta["config"])
        model = cls(config, scheme)
        for name, arr in arrays.items():
            if name not in model.params:
                raise ValueError(f"unexpected tensor {name} in checkpoint")
            if model.params[name].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}")
            model.params[name] = Tensor(arr.astype(config.np_dtype), requires_grad=True)
        model.meta = meta
        return model

    # -- forward pieces ----------------------------------------------------

    def _attention(self, base, x, mask):
        cfg = self.config
        B, T, d = x.shape
        H = cfg.n_heads
        dh = d // H
        qkv = tz.affine(x, self.params[f"{base}.attn.wqkv"], self.params[f"{base}.attn.bqkv"])
        qkv = tz.reshape(qkv, (B, T, 3, H, dh))
        qkv = tz.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, H, T, dh)
        q, k, v = qkv[0], qkv[1], qkv[2]
        weights = tz.masked_attention_scores(q, k, mask, 1.0 / np.sqrt(dh))
        ctx = tz.matmul(weights, v)                       # (B, H, T, dh)
        ctx = tz.transpose(ctx, (0, 2, 1, 3))
        ctx = tz.reshape(ctx, (B, T, d))
        return tz.affine(ctx, self.params[f"{base}.attn.wo"], self.params[f"{base}.attn.bo"])

    def _stream(self, name, x, controls, training, rng):
        cfg = self.config
        x = tz.dropout(x, cfg.dropout_input, rng, training)
        x = tz.concat([x, controls], axis=-1)
        x = tz.causal_conv1d(x, self.params[f"{name}.conv.w"], self.params[f"{name}.conv.b"])
        T = x.shape[1]
        if T > cfg.max_positions:
            raise ValueError(
                f"sequence length {T} exceeds max positional length {cfg.max_positions}"
            )
        # Index positions backward from the window end so a buffer holding
        # only the receptive field produces the same final-frame output as
        # the full history.
        pe = Tensor(self.pe[cfg.max_positions - T:])
        x = tz.add(x, pe)
        x = tz.spatial_dropout1d(x, cfg.dropout_spatial, rng, training)
        mask = local_causal_mask(T, cfg.window)
        for i in range(cfg.layers_per_stream):
            base = f"{name}.layer{i}"
            normed = tz.layer_norm(x, self.params[f"{base}.ln1.g"], self.params[f"{base}.ln1.b"])
            x = tz.add(x, self._attention(base, normed, mask))
            normed = tz.layer_norm(x, self.params[f"{base}.ln2.g"], self.params[f"{base}.ln2.b"])
            h = tz.relu(tz.affine(normed, self.params[f"{base}.ff1.w"], self.params[f"{base}.ff1.b"]))
            x = tz.add(x, tz.affine(h, self.params[f"{base}.ff2.w"], self.params[f"{base}.ff2.b"]))
        return tz.layer_norm(x, self.params[f"{name}.ln_out.g"], self.params[f"{name}.ln_out.b"])

    def decode_root_slice(self, level, slice_tensor, training):
        """Training-only: map a root slice back to the 6 root values."""
        if not training:
            raise RuntimeError("root decoders are excluded from inference graphs")
        h = tz.relu(
            tz.affine(
                slice_tensor,
                self.params[f"rootdec.{level}.fc1.w"],
                self.params[f"rootdec.{level}.fc1.b"],
            )
        )
        return tz.affine(
            h, self.params[f"rootdec.{level}.fc2.w"], self.params[f"rootdec.{level}.fc2.b"]
        )

    def forward(self, motion, labels, controls, training=False, rng=None):
        """motion: (B, T, 276) normalized; labels: (B, T, 4); controls:
        (B, T, control_size) normalized.  Returns per-frame next-frame PDFs.
        """
        cfg = self.config
        if motion.ndim != 3 or motion.shape[1] == 0:
            raise ValueError("motion must be (batch, time>0, features)")
        if training and rng is None:
            raise ValueError("training mode needs an injected random generator")
        dt = cfg.np_dtype
        upper, lower = self.scheme.split(motion, labels)
        xu = Tensor(np.ascontiguousarray(upper, dtype=dt))
        xl = Tensor(np.ascontiguousarray(lower, dtype=dt))
        ctl = Tensor(np.ascontiguousarray(controls, dtype=dt))

        z_su = self._stream("up_shallow", xu, ctl, training, rng)
        z_sl = self._stream("low_shallow", xl, ctl, training, rng)
        up_in = tz.add(z_su, tz.affine(z_sl, self.params["fuse.to_upper.w"], self.params["fuse.to_upper.b"]))
        low_in = tz.add(z_sl, tz.affine(z_su, self.params["fuse.to_lower.w"], self.params["fuse.to_lower.b"]))
        z_du = self._stream("up_deep", up_in, ctl, training, rng)
        z_dl = self._stream("low_deep", low_in, ctl, training, rng)

        agg = tz.affine(tz.concat([z_du, z_dl], axis=-1), self.params["agg.w"], self.params["agg.b"])
        m = MOTION_SIZE
        t = TRAJ_SIZE
        out = ModelOutput(
            motion_mean=agg[..., 0:m],
            motion_logstd=agg[..., m:2 * m],
            traj_pos_mean=agg[..., 2 * m:2 * m + t],
            traj_pos_logstd=agg[..., 2 * m + t:2 * m + 2 * t],
            traj_dir_mean=agg[..., 2 * m + 2 * t:2 * m + 3 * t],
            traj_dir_logstd=agg[..., 2 * m + 3 * t:2 * m + 4 * t],
            contact_logits=self._contact_head(z_sl, z_dl),
        )
        if training:
            dr = cfg.d_root
            out.root_slices = {
                "up_shallow": z_su[..., :dr],
                "low_shallow": z_sl[..., :dr],
                "up_deep": z_du[..., :dr],
                "low_deep": z_dl[..., :dr],
            }
            out.root_decoded = {
                key: self.decode_root_slice(key.split("_")[1], value, training)
                for key, value in out.root_slices.items()
            }
        return out

    def _contact_head(self, z_sl, z_dl):
        h = tz.relu(
            tz.affine(
                tz.concat([z_sl, z_dl], axis=-1),
                self.params["contact.fc1.w"],
                self.params["contact.fc1.b"],
            )
        )
        return tz.affine(h, self.params["contact.fc2.w"], self.params["contact.fc2.b"])

    def infer(self, motion, labels, controls):
        """Gradient-free eval-mode forward."""
        with tz.no_grad():
            return self.forward(motion, labels, controls, training=False)


# ---------------------------------------------------------------------------
# differentiable forward kinematics on predicted means

# (3, 9): e @ _CROSS_MAP is the row-major flattening of the cross matrix [e]x
_CROSS_MAP = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]
)


def _rodrigues(e):
    """Rotation matrices (..., 3, 3) from axis-angle vectors (..., 3)."""
    lead = e.shape[:-1]
    sq = tz.tensor_sum(tz.mul(e, e), axis=-1)
    a = tz.rotation_coeff_a(sq)
    b = tz.rotation_coeff_b(sq)
    K = tz.reshape(tz.matmul(e, Tensor(_CROSS_MAP.astype(e.data.dtype))), lead + (3, 3))
    K2 = tz.matmul(K, K)
    eye = Tensor(np.broadcast_to(np.eye(3, dtype=e.data.dtype), lead + (3, 3)).copy())
    a = tz.reshape(a, lead + (1, 1))
    b = tz.reshape(b, lead + (1, 1))
    return tz.add(eye, tz.add(tz.mul(a, K), tz.mul(b, K2)))


class FootKinematics:
    """Differentiable FK producing the four foot-joint positions in the
    root frame from a (normalized) motion-mean sequence.  Training only."""

    def __init__(self, skel, layout, stats):
        self.skel = skel
        self.layout = layout
        mean = stats.feature_mean.copy()
        std = stats.feature_std.copy()
        self.mean = mean
        self.std = std
        self.chains = []
        for ankle_name, toe_name in (("LeftFoot", "LeftToe"), ("RightFoot", "RightToe")):
            ankle = skel.index(ankle_name)
            chain = []
            j = ankle
            while j != 0:
                chain.append(j)
                j = skel.parent_index[j]
            chain.reverse()
            chain.append(skel.index(toe_name))
            self.chains.append(chain)

    def foot_positions(self, motion_mean):
        """motion_mean: (B, T, 276) normalized Tensor ->
        (B, T, 4, 3) positions of (lf, lt, rf, rt) in cm."""
        lay = self.layout
        dt = motion_mean.data.dtype
        denorm = tz.add(tz.mul(motion_mean, Tensor(self.std.astype(dt))), Tensor(self.mean.astype(dt)))
        lead = motion_mean.shape[:-1]

        height = denorm[..., 3:4]
        zero = tz.mul(height, 0.0)
        tilt = tz.concat([denorm[..., 4:5], zero, denorm[..., 5:6]], axis=-1)
        root_rot = _rodrigues(tilt)
        up = Tensor(np.array([0.0, 1.0, 0.0], dtype=dt))
        root_pos = tz.mul(height, up)

        outputs = {}
        for chain in self.chains:
            rot = root_rot
            pos = root_pos
            for j in chain:
                off = Tensor(self.skel.offsets[j].astype(dt).reshape(3, 1))
                step = tz.reshape(tz.matmul(rot, off), lead + (3,))
                pos = tz.add(pos, step)
                sl = lay.rotation_of(j)
                rot = tz.matmul(rot, _rodrigues(denorm[..., sl.start:sl.stop]))
                outputs[j] = pos
        feet = self.skel.foot_joint_indices  # (lf, lt, rf, rt)
        stacked = tz.concat(
            [tz.reshape(outputs[j], lead + (1, 3)) for j in feet], axis=-2
        )
        return stacked
