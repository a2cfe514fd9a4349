"""Dense float64 tensors with taped reverse-mode differentiation.

Ops execute eagerly on numpy arrays.  While a :class:`Tape` is active
(``with Tape() as tape:``) every op appends a record holding the output,
the inputs, and a closure mapping the output gradient to input gradients.
``Tape.backward`` replays the records exactly once, in reverse recording
order.  With no active tape, ops are plain numpy calls (inference mode).

Broadcasting is restricted: two operands must have equal shapes, or one
shape must be a trailing suffix of the other (a vector broadcast over
leading batch/time axes).  Anything else raises with both shapes named.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class Tensor:
    """A dense float64 array; treated as immutable once created."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("out", "inputs", "back")

    def __init__(self, out, inputs, back):
        self.out = out
        self.inputs = inputs
        self.back = back


class _TapeState(threading.local):
    """Per-thread tape stack so inference can run on worker threads."""

    def __init__(self):
        self.stack: list["Tape | None"] = []


_TAPES = _TapeState()


def _tape_stack() -> list["Tape | None"]:
    return _TAPES.stack


def _active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Records ops for one forward pass; replays them backward once."""

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], back) -> None:
        self._records.append(_Record(out, inputs, back))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> "GradientMap":
        """Gradients of a scalar loss w.r.t. every tensor on the tape."""
        if loss.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self._records):
            g_out = grads.get(id(rec.out))
            if g_out is None:
                continue
            for inp, g_in in zip(rec.inputs, rec.back(g_out)):
                if g_in is None:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g_in
                else:
                    grads[key] = g_in
        return GradientMap(grads)


class GradientMap:
    """Gradient lookup keyed by tensor identity."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def get(self, tensor: Tensor) -> np.ndarray | None:
        return self._grads.get(id(tensor))

    def get_or_zeros(self, tensor: Tensor) -> np.ndarray:
        g = self._grads.get(id(tensor))
        return np.zeros_like(tensor.data) if g is None else g


@contextmanager
def no_grad():
    """Suspend recording inside an active tape context."""
    _tape_stack().append(None)
    try:
        yield
    finally:
        _tape_stack().pop()


def _emit(out_data: np.ndarray, inputs: tuple[Tensor, ...], back) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, back)
    return out


# ---------------------------------------------------------------------------
# Broadcasting (equal shapes, or one a trailing suffix of the other)
# ---------------------------------------------------------------------------


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if len(small) == len(big) or (small and big[len(big) - len(small):] != small):
        raise ValueError(f"{op}: incompatible shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def neg(x: Tensor) -> Tensor:
    return _emit(-x.data, (x,), lambda g: (-g,))


def add_const(x: Tensor, c: float) -> Tensor:
    return _emit(x.data + c, (x,), lambda g: (g,))


def mul_const(x: Tensor, c: float) -> Tensor:
    return _emit(x.data * c, (x,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D (m,k)@(k,n) or batched 3-D (B,m,k)@(B,k,n) matrix product."""
    da, db = a.data, b.data
    if da.ndim == 2 and db.ndim == 2:
        if da.shape[1] != db.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        return _emit(da @ db, (a, b),
                     lambda g: (g @ db.T, da.T @ g))
    if da.ndim == 3 and db.ndim == 3:
        if da.shape[0] != db.shape[0] or da.shape[2] != db.shape[1]:
            raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        return _emit(da @ db, (a, b),
                     lambda g: (g @ db.transpose(0, 2, 1),
                                da.transpose(0, 2, 1) @ g))
    raise ValueError(f"matmul: expects both 2-D or both 3-D, got {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _emit(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), back)


def repeat_frames(x: Tensor, factor: int) -> Tensor:
    """Repeat each row of a (T, D) tensor ``factor`` times along axis 0."""
    t, d = x.shape

    def back(g):
        return (g.reshape(t, factor, d).sum(axis=1),)

    return _emit(np.repeat(x.data, factor, axis=0), (x,), back)


def tile_rows(x: Tensor, n: int) -> Tensor:
    """Tile a (D,) vector into an (n, D) matrix."""
    if x.ndim != 1:
        raise ValueError(f"tile_rows expects a vector, got shape {x.shape}")
    return _emit(np.broadcast_to(x.data, (n, x.shape[0])).copy(), (x,),
                 lambda g: (g.sum(axis=0),))


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape

    def back(g):
        if axis is None:
            return (np.full(shape, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit(x.data.sum(axis=axis), (x,), back)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    denom = x.size if axis is None else shape[axis]

    def back(g):
        if axis is None:
            return (np.full(shape, g / denom),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / denom,)

    return _emit(x.data.mean(axis=axis), (x,), back)


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _emit(s, (x,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def swish(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _emit(x.data * s, (x,), lambda g: (g * (s + x.data * s * (1.0 - s)),))


def log(x: Tensor) -> Tensor:
    return _emit(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    mask = (x.data > lo) & (x.data < hi)
    return _emit(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Composite primitives with dedicated backward rules
# ---------------------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _emit(s, (x,), back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(
            f"layer_norm: gamma/beta shapes {gamma.shape}/{beta.shape} "
            f"do not match feature dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def back(g):
        batch_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=batch_axes)
        dbeta = g.sum(axis=batch_axes)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return dx, dgamma, dbeta

    return _emit(gamma.data * xhat + beta.data, (x, gamma, beta), back)


def depthwise_conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Per-channel temporal convolution with same zero padding.

    x: (T, C); w: (k, C) with k odd.  y[t, c] = sum_j w[j, c] * x[t+j-k//2, c].
    """
    t, c = x.shape
    k, cw = w.shape
    if cw != c:
        raise ValueError(f"depthwise_conv1d: kernel channels {cw} != input channels {c}")
    if k % 2 == 0:
        raise ValueError(f"depthwise_conv1d: kernel length must be odd, got {k}")
    pad = k // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (T, C, k)
    y = np.einsum("tck,kc->tc", win, w.data)

    def back(g):
        dw = np.einsum("tc,tck->kc", g, win)
        gp = np.pad(g, ((pad, pad), (0, 0)))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, k, axis=0)
        dx = np.einsum("tck,kc->tc", gwin, w.data[::-1])
        return dx, dw

    return _emit(y, (x, w), back)


def mean_std_pool(x: Tensor) -> Tensor:
    """Pool a (T, D) sequence to a (2D,) vector of per-dim mean and std.

    Std uses the biased estimator; a constant sequence pools to exactly
    zero std (the backward guards the division there).
    """
    t, d = x.shape
    mu = x.data.mean(axis=0)
    centered = x.data - mu
    std = np.sqrt((centered ** 2).mean(axis=0))

    def back(g):
        gm, gs = g[:d], g[d:]
        safe = np.maximum(std, 1e-12)
        dx = gm / t + gs * centered / (t * safe)
        return (dx,)

    return _emit(np.concatenate([mu, std]), (x,), back)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale a vector to unit Euclidean norm."""
    if x.ndim != 1:
        raise ValueError(f"l2_normalize expects a vector, got shape {x.shape}")
    n = max(float(np.linalg.norm(x.data)), eps)
    y = x.data / n

    def back(g):
        return ((g - y * (y @ g)) / n,)

    return _emit(y, (x,), back)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy; labels are integer class indices."""
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"cross_entropy: labels shape {labels.shape} != ({b},)")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    losses = -np.log(np.maximum(p[rows, labels], 1e-300))

    def back(g):
        dz = p.copy()
        dz[rows, labels] -= 1.0
        return (g * dz / b,)

    return _emit(losses.mean(), (logits,), back)
