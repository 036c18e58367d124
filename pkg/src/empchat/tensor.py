"""Dense real tensors with tape-based reverse-mode autodiff.

Ops record themselves in execution order (a monotonically increasing tape id
per tensor); backward() replays the reachable subgraph in reverse tape order.
Only the broadcasting the model needs is supported: bias addition over the
last axis, plus gradient-free constant addition (attention masks).
"""

from __future__ import annotations

import json
import struct

import numpy as np
from scipy.special import erf

_tape_counter = 0


def _next_tape_id():
    global _tape_counter
    _tape_counter += 1
    return _tape_counter


class Tensor:
    """A numpy-backed array plus the bookkeeping backward() needs.

    grad is None until backward reaches this node; contributions accumulate
    with +=, so repeated backward calls (gradient accumulation) sum up.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_tape_id")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._tape_id = _next_tape_id()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # operator sugar; the real work lives in the module functions below
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __sub__(self, other):
        return add(self, -other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def backward(self):
        backward(self)


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _from_op(data, parents, backward_fn):
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss):
    """Populate .grad for every requires_grad ancestor of a scalar loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar, got shape {loss.data.shape}")
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.requires_grad:
            nodes.append(t)
            stack.extend(t._parents)
    nodes.sort(key=lambda t: t._tape_id, reverse=True)
    loss._accumulate(np.ones_like(loss.data))
    for t in nodes:
        if t._backward is not None and t.grad is not None:
            t._backward(t.grad)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(x, y):
    """x + y for equal shapes, or bias addition of a 1-d y over x's last axis."""
    if x.data.shape == y.data.shape:
        def _bw(g):
            if x.requires_grad:
                x._accumulate(g)
            if y.requires_grad:
                y._accumulate(g)
        return _from_op(x.data + y.data, (x, y), _bw)
    if y.data.ndim == 1 and x.data.shape[-1] == y.data.shape[0]:
        def _bw(g):
            if x.requires_grad:
                x._accumulate(g)
            if y.requires_grad:
                y._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
        return _from_op(x.data + y.data, (x, y), _bw)
    raise ValueError(f"add: incompatible shapes {x.data.shape} and {y.data.shape}")


def add_const(x, const):
    """Add a gradient-free constant array (numpy broadcasting allowed)."""
    const = np.asarray(const, dtype=x.data.dtype)
    out_data = x.data + const
    if out_data.shape != x.data.shape:
        raise ValueError("add_const must not change the shape")

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g)

    return _from_op(out_data, (x,), _bw)


def mul(x, y):
    if x.data.shape != y.data.shape:
        raise ValueError(f"mul: shape mismatch {x.data.shape} vs {y.data.shape}")

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g * y.data)
        if y.requires_grad:
            y._accumulate(g * x.data)

    return _from_op(x.data * y.data, (x, y), _bw)


def mul_scalar(x, s):
    s = float(s)

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g * s)

    return _from_op(x.data * s, (x,), _bw)


def matmul(x, y):
    """2-d @ 2-d, or stacked n-d @ n-d with identical leading dims."""
    a, b = x.data, y.data
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise ValueError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: leading dims differ {a.shape} vs {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dims mismatch {a.shape} @ {b.shape}")

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g @ np.swapaxes(b, -1, -2))
        if y.requires_grad:
            y._accumulate(np.swapaxes(a, -1, -2) @ g)

    return _from_op(a @ b, (x, y), _bw)


def dot(x, y):
    """Inner product of two vectors, as a scalar tensor."""
    if x.data.ndim != 1 or x.data.shape != y.data.shape:
        raise ValueError("dot expects two equal-length vectors")

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g * y.data)
        if y.requires_grad:
            y._accumulate(g * x.data)

    return _from_op(np.dot(x.data, y.data), (x, y), _bw)


def reshape(x, shape):
    old_shape = x.data.shape

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g.reshape(old_shape))

    return _from_op(x.data.reshape(shape), (x,), _bw)


def transpose(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inv))

    return _from_op(x.data.transpose(axes), (x,), _bw)


def slice_rows(x, start, stop):
    """Contiguous slice along axis 0."""
    n = x.data.shape[0]
    if not (0 <= start <= stop <= n):
        raise ValueError(f"slice_rows: [{start}:{stop}] out of range for length {n}")

    def _bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start:stop] = g
            x._accumulate(full)

    return _from_op(x.data[start:stop], (x,), _bw)


def embedding(table, ids):
    """Row gather from an embedding table; grad scatters back with np.add.at."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError(
            f"embedding: id out of range (table has {table.data.shape[0]} rows)"
        )

    def _bw(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            table._accumulate(full)

    return _from_op(table.data[ids], (table,), _bw)


def concat(parts):
    """Concatenate 1-d tensors; backward slices the gradient back apart."""
    parts = list(parts)
    if not parts or any(p.data.ndim != 1 for p in parts):
        raise ValueError("concat expects a non-empty list of 1-d tensors")
    sizes = [p.data.shape[0] for p in parts]

    def _bw(g):
        off = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                p._accumulate(g[off : off + size])
            off += size

    return _from_op(np.concatenate([p.data for p in parts]), tuple(parts), _bw)


def tsum(x):
    def _bw(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g)))

    return _from_op(x.data.sum(), (x,), _bw)


def tmean(x):
    n = x.data.size

    def _bw(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, float(g) / n))

    return _from_op(x.data.mean(), (x,), _bw)


# ---------------------------------------------------------------------------
# neural ops


def softmax(x):
    """Row-stabilized softmax over the last axis."""
    if not np.all(np.isfinite(x.data)):
        raise ValueError("softmax: non-finite input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        if x.requires_grad:
            x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _from_op(y, (x,), _bw)


def log_softmax(x):
    if not np.all(np.isfinite(x.data)):
        raise ValueError("log_softmax: non-finite input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g - np.exp(y) * g.sum(axis=-1, keepdims=True))

    return _from_op(y, (x,), _bw)


def cross_entropy(logits, targets, reduction="mean"):
    """-log softmax(logits)[target]; logits (V,) with int target or (N,V) with (N,)."""
    single = logits.data.ndim == 1
    mat = logits.data.reshape(1, -1) if single else logits.data
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, v = mat.shape
    if tgt.shape != (n,):
        raise ValueError(f"cross_entropy: expected {n} targets, got {tgt.shape}")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise ValueError(f"cross_entropy: target index out of range [0, {v})")
    shifted = mat - mat.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    lsm = shifted - lse
    losses = -lsm[np.arange(n), tgt]
    probs = np.exp(lsm)

    if reduction == "none":
        def _bw(g):
            if logits.requires_grad:
                gi = np.atleast_1d(g)[:, None]
                d = probs * gi
                d[np.arange(n), tgt] -= np.ravel(g)
                logits._accumulate(d.reshape(logits.data.shape))
        out = losses[0] if single else losses
        return _from_op(out, (logits,), _bw)

    if reduction not in ("mean", "sum"):
        raise ValueError(f"cross_entropy: unknown reduction {reduction!r}")
    scale = 1.0 / n if reduction == "mean" else 1.0

    def _bw(g):
        if logits.requires_grad:
            d = probs.copy()
            d[np.arange(n), tgt] -= 1.0
            logits._accumulate((d * (float(g) * scale)).reshape(logits.data.shape))

    return _from_op(losses.sum() * scale, (logits,), _bw)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data.shape[-1] if x.data.ndim else 0
    if d == 0:
        raise ValueError("layer_norm: zero-length input")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError("layer_norm: gain/bias must match the last axis")
    if eps <= 0:
        raise ValueError("layer_norm: eps must be > 0")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def _bw(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            x._accumulate(dx)

    return _from_op(y, (x, gain, bias), _bw)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact gaussian-error-linear unit x * Phi(x)."""
    phi_cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    y = x.data * phi_cdf

    def _bw(g):
        if x.requires_grad:
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            x._accumulate(g * (phi_cdf + x.data * pdf))

    return _from_op(y, (x,), _bw)


def dropout(x, rate, rng):
    """Inverted dropout; identity when rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    mask = mask.astype(x.data.dtype)

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _from_op(x.data * mask, (x,), _bw)


# ---------------------------------------------------------------------------
# checkpoint file format: u64 little-endian manifest length, JSON manifest
# (name/shape/dtype/offset per entry), then raw little-endian values.

_DTYPE_TAGS = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}


def save_tensors(path, named_arrays):
    entries = []
    blobs = []
    offset = 0
    for name, arr in named_arrays.items():
        arr = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
        tag = _DTYPE_TAGS.get(arr.dtype)
        if tag is None:
            raise ValueError(f"save_tensors: unsupported dtype {arr.dtype} for {name!r}")
        raw = np.ascontiguousarray(arr).astype(tag).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"format": "empchat-tensors", "version": 1, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for raw in blobs:
            f.write(raw)


def load_tensors(path):
    with open(path, "rb") as f:
        (mlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(mlen).decode())
        data = f.read()
    out = {}
    for entry in manifest["tensors"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype=dt, count=count, offset=start)
        out[entry["name"]] = arr.reshape(entry["shape"]).astype(dt.newbyteorder("="))
    return out
