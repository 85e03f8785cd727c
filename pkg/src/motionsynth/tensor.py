"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap numpy buffers; every operation records its inputs and a
backward closure, and backward() replays the recorded graph in reverse
topological order exactly once.  float64 is used by the test suite for
finite-difference checks, float32 is the runtime default.

Random operations (the dropouts) draw from an injected numpy Generator so
runs are reproducible; there is no global random state in this module.
"""

from __future__ import annotations

import json
import struct
from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32
LOG_2PI = float(np.log(2.0 * np.pi))
MASK_BIAS = -1e9

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _record(out, parents, backward):
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data, dtype=g.dtype)
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient g to the given (possibly broadcast) source shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss):
    """Populate .grad on every requires_grad leaf reachable from loss."""
    if loss.data.size != 1:
        raise ValueError("backward needs a scalar loss")
    if loss._consumed:
        raise RuntimeError("this graph's tape was already consumed by backward")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        node._consumed = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node._parents:
            # intermediate grads are no longer needed once propagated
            node.grad = None
            node._backward = None
            node._parents = ()


# ---------------------------------------------------------------------------
# elementwise and shape primitives


def add(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    out = Tensor(a.data + b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), back)


def sub(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    out = Tensor(a.data - b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _record(out, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    out = Tensor(a.data * b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), back)


def div(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    out = Tensor(a.data / b.data)

    def back(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _record(out, (a, b), back)


def matmul(a, b):
    """Matrix product; leading batch dimensions must match (or b is 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim >= 2 and b.data.ndim >= 2 and a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _record(out, (a, b), back)


def affine(x, weight, bias):
    """x @ weight + bias; the embedding/projection workhorse."""
    return add(matmul(x, weight), bias)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return _record(out, tuple(tensors), back)


def take(x, idx):
    """Basic slicing/indexing with gradient scatter."""
    x = as_tensor(x)
    out = Tensor(x.data[idx].copy())

    def back(g):
        gx = np.zeros_like(x.data)
        gx[idx] += g
        _accumulate(x, gx)

    return _record(out, (x,), back)


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape))

    def back(g):
        _accumulate(x, g.reshape(x.shape))

    return _record(out, (x,), back)


def transpose(x, axes):
    x = as_tensor(x)
    out = Tensor(np.transpose(x.data, axes))
    inverse = np.argsort(axes)

    def back(g):
        _accumulate(x, np.transpose(g, inverse))

    return _record(out, (x,), back)


def tensor_sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return _record(out, (x,), back)


def tensor_mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(tensor_sum(x, axis, keepdims), 1.0 / count)


def relu(x):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def back(g):
        _accumulate(x, g * (x.data > 0.0))

    return _record(out, (x,), back)


def exp(x):
    x = as_tensor(x)
    out = Tensor(np.exp(x.data))

    def back(g):
        _accumulate(x, g * out.data)

    return _record(out, (x,), back)


def log(x):
    x = as_tensor(x)
    out = Tensor(np.log(x.data))

    def back(g):
        _accumulate(x, g / x.data)

    return _record(out, (x,), back)


def sigmoid(x):
    x = as_tensor(x)
    out = Tensor(1.0 / (1.0 + np.exp(-x.data)))

    def back(g):
        _accumulate(x, g * out.data * (1.0 - out.data))

    return _record(out, (x,), back)


def sqrt(x):
    x = as_tensor(x)
    out = Tensor(np.sqrt(x.data))

    def back(g):
        safe = np.where(out.data > 0.0, out.data, 1.0)
        _accumulate(x, np.where(out.data > 0.0, g / (2.0 * safe), 0.0))

    return _record(out, (x,), back)


def sin(x):
    x = as_tensor(x)
    out = Tensor(np.sin(x.data))

    def back(g):
        _accumulate(x, g * np.cos(x.data))

    return _record(out, (x,), back)


def cos(x):
    x = as_tensor(x)
    out = Tensor(np.cos(x.data))

    def back(g):
        _accumulate(x, -g * np.sin(x.data))

    return _record(out, (x,), back)


def absolute(x):
    x = as_tensor(x)
    out = Tensor(np.abs(x.data))

    def back(g):
        _accumulate(x, g * np.sign(x.data))

    return _record(out, (x,), back)


def clamp_min(x, floor):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, floor))

    def back(g):
        _accumulate(x, g * (x.data > floor))

    return _record(out, (x,), back)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def back(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(x, y * (g - inner))

    return _record(out, (x,), back)


def l2norm(x, axis=-1):
    """Euclidean norm along an axis; gradient is x / ||x|| (0 at the origin)."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis))
    out = Tensor(n)

    def back(g):
        safe = np.where(n > 0.0, n, 1.0)
        scale = np.where(n > 0.0, g / safe, 0.0)
        _accumulate(x, np.expand_dims(scale, axis) * x.data)

    return _record(out, (x,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean/unit variance, then scale+shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data)

    def back(g):
        lead = tuple(range(g.ndim - 1))
        _accumulate(bias, g.sum(axis=lead))
        _accumulate(gain, (g * xhat).sum(axis=lead))
        gx = g * gain.data
        mean_g = gx.mean(axis=-1, keepdims=True)
        mean_gx = (gx * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (gx - mean_g - xhat * mean_gx))

    return _record(out, (x, gain, bias), back)


def causal_conv1d(x, weight, bias):
    """1-D convolution over time where output t sees inputs t-k+1..t only.

    x: (B, T, Cin); weight: (k, Cin, Cout); bias: (Cout,).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    k = weight.shape[0]
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    B, T, _ = x.shape
    xp = np.pad(x.data, ((0, 0), (k - 1, 0), (0, 0)))
    y = np.zeros((B, T, weight.shape[2]), dtype=x.data.dtype)
    for i in range(k):
        y += xp[:, i:i + T, :] @ weight.data[i]
    y += bias.data
    out = Tensor(y)

    def back(g):
        _accumulate(bias, g.sum(axis=(0, 1)))
        gw = np.empty_like(weight.data)
        gxp = np.zeros_like(xp)
        for i in range(k):
            window = xp[:, i:i + T, :]
            gw[i] = np.einsum("btc,btd->cd", window, g)
            gxp[:, i:i + T, :] += g @ weight.data[i].T
        _accumulate(weight, gw)
        _accumulate(x, gxp[:, k - 1:, :])

    return _record(out, (x, weight, bias), back)


def dropout(x, p, rng, training):
    """Per-element dropout with inverted scaling; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = Tensor(x.data * mask)

    def back(g):
        _accumulate(x, g * mask)

    return _record(out, (x,), back)


def spatial_dropout1d(x, p, rng, training):
    """Channel dropout: zeroes whole channels across all time steps.

    x: (B, T, C); one Bernoulli draw per (batch, channel).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    B, _, C = x.shape
    mask = (rng.random((B, 1, C)) >= p).astype(x.data.dtype) / (1.0 - p)
    out = Tensor(x.data * mask)

    def back(g):
        _accumulate(x, g * mask)

    return _record(out, (x,), back)


def masked_attention_scores(q, k, mask, scale):
    """Masked scaled dot-product attention weights.

    q, k: (..., T, d); mask: (T, T) boolean, True where attention is allowed.
    Returns softmax weights (..., T, T); disallowed positions get ~0 weight.
    """
    scores = mul(matmul(q, transpose(k, tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2))), scale)
    bias = np.where(np.asarray(mask), 0.0, MASK_BIAS).astype(scores.data.dtype)
    return softmax(add(scores, Tensor(bias)), axis=-1)


_ROT_SERIES_CUTOFF = 0.01  # squared angle below which the Taylor series is exact enough


def rotation_coeff_a(sq_angle):
    """sin(sqrt(t))/sqrt(t) as a function of the squared angle t.

    Piecewise closed form / Taylor series so both the value and the
    gradient stay finite and accurate down to t = 0 (the closed-form
    derivative suffers catastrophic cancellation there).
    """
    x = as_tensor(sq_angle)
    t = x.data
    small = t < _ROT_SERIES_CUTOFF
    ts = np.where(small, t, 0.0)
    theta = np.sqrt(np.where(small, 1.0, t))
    series = 1.0 - ts / 6.0 + ts * ts / 120.0
    closed = np.sin(theta) / theta
    out = Tensor(np.where(small, series, closed))

    def back(g):
        d_series = -1.0 / 6.0 + ts / 60.0
        d_closed = (theta * np.cos(theta) - np.sin(theta)) / (2.0 * theta**3)
        _accumulate(x, g * np.where(small, d_series, d_closed))

    return _record(out, (x,), back)


def rotation_coeff_b(sq_angle):
    """(1 - cos(sqrt(t)))/t as a function of the squared angle t; same
    stability treatment as rotation_coeff_a."""
    x = as_tensor(sq_angle)
    t = x.data
    small = t < _ROT_SERIES_CUTOFF
    ts = np.where(small, t, 0.0)
    tc = np.where(small, 1.0, t)
    theta = np.sqrt(tc)
    series = 0.5 - ts / 24.0 + ts * ts / 720.0
    closed = (1.0 - np.cos(theta)) / tc
    out = Tensor(np.where(small, series, closed))

    def back(g):
        d_series = -1.0 / 24.0 + ts / 360.0
        d_closed = (theta * np.sin(theta) - 2.0 * (1.0 - np.cos(theta))) / (2.0 * tc * tc)
        _accumulate(x, g * np.where(small, d_series, d_closed))

    return _record(out, (x,), back)


def gaussian_nll(mean, logstd, target, floor=1e-4):
    """Elementwise negative log-density of a diagonal Gaussian.

    The standard deviation is exp(logstd) floored at `floor`; gradients stop
    flowing to logstd where the floor is active.
    """
    mean, logstd = as_tensor(mean), as_tensor(logstd)
    target = np.asarray(target, dtype=mean.data.dtype)
    sigma = np.maximum(np.exp(logstd.data), floor)
    z = (target - mean.data) / sigma
    out = Tensor(np.log(sigma) + 0.5 * z * z + 0.5 * LOG_2PI)

    def back(g):
        _accumulate(mean, g * (mean.data - target) / (sigma * sigma))
        active = np.exp(logstd.data) > floor
        _accumulate(logstd, g * np.where(active, 1.0 - z * z, 0.0))

    return _record(out, (mean, logstd), back)


# ---------------------------------------------------------------------------
# parameter checkpoints

_MAGIC = b"MSTN"
_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(path, tensors, meta=None):
    """Write named tensors (dict of str -> ndarray/Tensor) plus a JSON
    metadata block, little-endian throughout."""
    meta_bytes = json.dumps(meta or {}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            arr = value.data if isinstance(value, Tensor) else np.asarray(value)
            code = _DTYPE_CODES[arr.dtype]
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            fh.write(arr.astype(_CODE_DTYPES[code], copy=False).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
            dtype = _CODE_DTYPES[code]
            raw = fh.read(int(np.prod(shape)) * dtype.itemsize)
            arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
            tensors[name] = arr.astype(dtype.newbyteorder("="))
        return tensors, meta
