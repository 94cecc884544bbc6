"""Dense-tensor arithmetic with reverse-mode automatic differentiation.

A ``Tape`` records every differentiable operation applied to watched
tensors; ``backward`` replays the records in reverse to produce gradients,
including gradients with respect to model inputs (needed by the gradient
sign attacks).  Arrays are plain numpy, float32 by default; gradient-check
suites run the same ops in float64.

Gradient accumulation walks the tape in a single fixed order, so repeated
runs over identical inputs are bit-identical.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, ShapeError, TapeError, ValidationError

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in _FLOAT_DTYPES:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """An n-dimensional array, optionally bound to a gradient tape node."""

    __slots__ = ("data", "tape", "node_id", "grad")

    def __init__(self, data, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.tape: Optional[Tape] = None
        self.node_id: Optional[int] = None
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        """A copy of this tensor with no tape binding."""
        return Tensor(self.data.copy())

    def __repr__(self):
        taped = "" if self.tape is None else f", node={self.node_id}"
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{taped})"


class _Node:
    __slots__ = ("parents", "backward")

    def __init__(self, parents, backward):
        self.parents = parents      # tuple of parent node ids (None = constant)
        self.backward = backward    # grad -> tuple of parent grads, None for leaves


class Tape:
    """Append-only record of operations; parents always precede children."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._used = False

    def __len__(self):
        return len(self._nodes)

    def watch(self, tensor_or_array) -> Tensor:
        """Register a leaf tensor so gradients can be requested for it."""
        t = tensor_or_array if isinstance(tensor_or_array, Tensor) else Tensor(tensor_or_array)
        if t.tape is self:
            return t
        if t.tape is not None:
            raise TapeError("tensor is already bound to a different tape")
        t.tape = self
        t.node_id = self._record((), None)
        return t

    def reset(self):
        """Allow another backward pass over the recorded graph."""
        self._used = False

    def _record(self, parents: tuple, backward) -> int:
        self._nodes.append(_Node(parents, backward))
        return len(self._nodes) - 1


def _bind(inputs: Sequence[Tensor], out: Tensor, backward) -> Tensor:
    """Attach ``out`` to the tape shared by ``inputs`` (if any)."""
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise TapeError("operands live on different tapes")
    if tape is not None:
        parents = tuple(t.node_id if t.tape is tape else None for t in inputs)
        out.tape = tape
        out.node_id = tape._record(parents, backward)
    return out


def backward(loss: Tensor, wrt: Iterable[Tensor]) -> dict:
    """Populate and return gradients of a scalar loss for every tensor in ``wrt``.

    A tape supports one backward pass; call ``tape.reset()`` to run another.
    """
    tape = loss.tape
    if tape is None:
        raise TapeError("loss is not recorded on an active tape")
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
    if tape._used:
        raise TapeError("backward was already called on this tape (use reset())")
    tape._used = True

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for nid in range(loss.node_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        node = tape._nodes[nid]
        if node.backward is None:
            continue
        for pid, pg in zip(node.parents, node.backward(g)):
            if pid is None or pg is None:
                continue
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg

    result = {}
    for t in wrt:
        if t.tape is not tape or t.node_id is None:
            raise TapeError("requested tensor is not on the loss tape")
        t.grad = grads.get(t.node_id)
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        result[t] = t.grad
    return result


# ---------------------------------------------------------------------------
# elementwise kernels
# ---------------------------------------------------------------------------

def _first_offender(mask: np.ndarray) -> int:
    return int(np.argmax(mask.ravel()))


def _check_domain(kernel: str, x: np.ndarray, bad: np.ndarray, requirement: str):
    if bad.any():
        i = _first_offender(bad)
        raise DomainError(
            f"{kernel}: input must be {requirement}; "
            f"first offending flat index {i} (value {x.ravel()[i]!r})"
        )


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    positive = x.data > 0

    def grad(g):
        return (g * positive,)

    return _bind((x,), out, grad)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    out = Tensor(y)

    def grad(g):
        return (g * y,)

    return _bind((x,), out, grad)


def log(x: Tensor) -> Tensor:
    _check_domain("log", x.data, ~(np.isfinite(x.data) & (x.data > 0)),
                  "finite and strictly positive")
    data = x.data
    out = Tensor(np.log(data))

    def grad(g):
        return (g / data,)

    return _bind((x,), out, grad)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)

    def grad(g):
        return (-g,)

    return _bind((x,), out, grad)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    if c == 1.0:
        out = Tensor(x.data.copy())
    else:
        out = Tensor(c * x.data)

    def grad(g):
        return (c * g,)

    return _bind((x,), out, grad)


def power(x: Tensor, gamma: float) -> Tensor:
    gamma = float(gamma)
    if gamma != int(gamma):
        _check_domain("power", x.data, ~(np.isfinite(x.data) & (x.data >= 0)),
                      f"finite and non-negative for non-integer exponent {gamma}")
    data = x.data
    out = Tensor(data ** gamma)

    def grad(g):
        return (g * gamma * data ** (gamma - 1.0),)

    return _bind((x,), out, grad)


def sign(x: Tensor) -> Tensor:
    # subgradient 0 everywhere, including at 0
    out = Tensor(np.sign(x.data))

    def grad(g):
        return (np.zeros_like(x.data),)

    return _bind((x,), out, grad)


_KERNELS = {
    "relu": relu,
    "exp": exp,
    "log": log,
    "neg": neg,
    "scale": scale,
    "power": power,
    "sign": sign,
}

ELEMENTWISE_KERNELS = tuple(_KERNELS)


def elementwise_map(x: Tensor, kernel: str, param: Optional[float] = None) -> Tensor:
    """Apply a named elementwise kernel; ``scale`` and ``power`` take a parameter."""
    if kernel not in _KERNELS:
        raise ValidationError(f"unknown kernel {kernel!r}; expected one of {ELEMENTWISE_KERNELS}")
    fn = _KERNELS[kernel]
    if kernel in ("scale", "power"):
        if param is None:
            raise ValidationError(f"kernel {kernel!r} requires a parameter")
        return fn(x, param)
    if param is not None:
        raise ValidationError(f"kernel {kernel!r} takes no parameter")
    return fn(x)


# ---------------------------------------------------------------------------
# binary and structural ops
# ---------------------------------------------------------------------------

def _require_same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    out = Tensor(a.data + b.data)

    def grad(g):
        return (g, g)

    return _bind((a, b), out, grad)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    out = Tensor(a.data - b.data)

    def grad(g):
        return (g, -g)

    return _bind((a, b), out, grad)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def grad(g):
        return (g * bd, g * ad)

    return _bind((a, b), out, grad)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-feature bias: (N,D)+(D,) or per-channel: (N,C,H,W)+(C,)."""
    if x.data.ndim == 2 and b.shape == (x.shape[1],):
        out = Tensor(x.data + b.data)

        def grad(g):
            return (g, g.sum(axis=0))

    elif x.data.ndim == 4 and b.shape == (x.shape[1],):
        out = Tensor(x.data + b.data[None, :, None, None])

        def grad(g):
            return (g, g.sum(axis=(0, 2, 3)))

    else:
        raise ShapeError(f"bias_add: cannot add bias {b.shape} to input {x.shape}")
    return _bind((x, b), out, grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def grad(g):
        return (g @ bd.T, ad.T @ g)

    return _bind((a, b), out, grad)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    orig = x.shape
    out = Tensor(x.data.reshape(shape))

    def grad(g):
        return (g.reshape(orig),)

    return _bind((x,), out, grad)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Take columns [start, stop) of a 2-d tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols: expected 2-d input, got {x.shape}")
    n, d = x.shape
    if not (0 <= start < stop <= d):
        raise ValidationError(f"slice_cols: range [{start}, {stop}) invalid for width {d}")
    out = Tensor(x.data[:, start:stop].copy())

    def grad(g):
        gx = np.zeros((n, d), dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return _bind((x,), out, grad)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.sum(x.data))
    shape, dtype = x.data.shape, x.data.dtype

    def grad(g):
        return (np.full(shape, g, dtype=dtype) if g.ndim == 0 else g * np.ones(shape, dtype),)

    return _bind((x,), out, grad)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation of (N,C,H,W) with filters (F,C,kh,kw), zero padding."""
    from .errors import ConfigError

    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d operands, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels but filters expect {cw}")
    stride, pad = int(stride), int(pad)
    if stride < 1 or pad < 0:
        raise ConfigError(f"conv2d: stride {stride} / pad {pad} invalid")
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise ConfigError(f"conv2d: kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{wd + 2 * pad}")
    if (h + 2 * pad - kh) % stride or (wd + 2 * pad - kw) % stride:
        raise ConfigError(
            f"conv2d: output extent not exact for input {h}x{wd}, kernel {kh}x{kw}, "
            f"stride {stride}, pad {pad}"
        )
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.data.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = xp[:, :, u:u + (ho - 1) * stride + 1:stride,
                                  v:v + (wo - 1) * stride + 1:stride]
    wdta = w.data
    # tensordot keeps the contraction on the BLAS path
    out = Tensor(np.tensordot(cols, wdta, axes=([1, 2, 3], [1, 2, 3]))
                 .transpose(0, 3, 1, 2).copy())

    def grad(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        gcols = np.tensordot(g, wdta, axes=([1], [0])).transpose(0, 3, 4, 5, 1, 2)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + (ho - 1) * stride + 1:stride,
                    v:v + (wo - 1) * stride + 1:stride] += gcols[:, :, u, v]
        gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        return (gx, gw)

    return _bind((x, w), out, grad)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; extents must divide exactly."""
    from .errors import ConfigError

    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2d: expected 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    size = int(size)
    if size < 1 or h % size or w % size:
        raise ConfigError(f"max_pool2d: window {size} does not tile input {h}x{w}")
    ho, wo = h // size, w // size
    windows = x.data.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(n, c, ho, wo, size * size)
    idx = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0])

    def grad(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return _bind((x,), out, grad)


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax of a 2-d array (plain numpy, no tape)."""
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, targets, sample_weights=None) -> Tensor:
    """Mean over the batch of -sum_k t_k * log(softmax(logits)_k).

    ``targets`` rows must be probability vectors (sum to 1 within 1e-6).
    Optional ``sample_weights`` rescale each sample's contribution; the sum
    is still divided by the batch size.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if logits.data.ndim != 2 or t.shape != logits.shape:
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs targets {t.shape}")
    n, d = logits.shape
    if d < 2:
        raise ValidationError(f"softmax_cross_entropy: need at least 2 classes, got {d}")
    row_sums = t.sum(axis=1)
    bad = np.abs(row_sums - 1.0) > 1e-6
    if bad.any():
        i = _first_offender(bad)
        raise ValidationError(
            f"softmax_cross_entropy: target row {i} sums to {row_sums[i]!r}, expected 1"
        )
    # the loss runs in the logits' precision; targets follow
    t = t.astype(logits.dtype, copy=False)
    if sample_weights is None:
        w = None
    else:
        w = np.asarray(sample_weights, dtype=logits.dtype)
        if w.shape != (n,):
            raise ShapeError(f"softmax_cross_entropy: weights shape {w.shape}, expected ({n},)")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    per_sample = lse - (t * z).sum(axis=1)
    if w is not None:
        per_sample = per_sample * w
    out = Tensor(per_sample.sum() / n)

    def grad(g):
        p = np.exp(z - lse[:, None])
        gl = (p - t) / n
        if w is not None:
            gl = gl * w[:, None]
        return (gl * g,)

    return _bind((logits,), out, grad)
