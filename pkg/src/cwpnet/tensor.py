"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation computes its forward value with numpy and, when
a :class:`Tape` is active and at least one input is tracked, appends a node
holding the inputs and a vector-Jacobian rule.  :func:`backward` replays the
tape in reverse recording order, which is a valid reverse topological order
because a node can only be recorded after its inputs exist.

Values default to float32.  Passing ``dtype=np.float64`` when building leaves
yields a float64 graph, which the gradient-check oracles use.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Raised when tensor dimensions are incompatible with an operation."""


class Tensor:
    """n-dimensional value array with an optional gradient buffer.

    Parameters
    ----------
    data : array_like
        Values.  Trainable leaves always own a private copy.
    trainable : bool
        Leaf tensors flagged trainable receive gradients from :func:`backward`.
    dtype : numpy dtype or None
        Storage dtype.  ``None`` keeps the dtype of ``data`` if it is floating.
    """

    __slots__ = ("data", "grad", "trainable", "tracked", "name")
    __array_priority__ = 100

    def __init__(self, data, trainable: bool = False, dtype=DEFAULT_DTYPE, name: str = ""):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if np.issubdtype(arr.dtype, np.floating) else DEFAULT_DTYPE
        arr = np.asarray(arr, dtype=dtype)
        if trainable or not arr.flags.c_contiguous:
            arr = arr.copy(order="C")
        self.data = arr
        self.trainable = trainable
        self.tracked = trainable
        self.grad = np.zeros_like(self.data) if trainable else None
        self.name = name

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    shape = dims

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got dims {self.dims}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=None)

    def __repr__(self) -> str:
        flag = ", trainable" if self.trainable else ""
        return f"Tensor(dims={self.dims}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


# ---------------------------------------------------------------------------
# Tape


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


_state = threading.local()


def _active_tape() -> Tape | None:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations executed inside the ``with`` block are
    recorded.  The active tape is thread-local, so separate threads can drive
    separate tapes.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> Tape:
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self.nodes.append(_Node(out, inputs, vjp))


class no_record:
    """Suspend recording on the current thread (for inference and oracles)."""

    def __enter__(self):
        self._saved = getattr(_state, "stack", [])
        _state.stack = []

    def __exit__(self, *exc):
        _state.stack = self._saved


def make_op(value: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap ``value`` as the output of an operation over ``inputs``.

    ``vjp(g)`` must return one gradient (or ``None``) per input.
    """
    out = Tensor(value, dtype=None)
    tape = _active_tape()
    if tape is not None and any(t.tracked for t in inputs):
        out.tracked = True
        tape.record(out, tuple(inputs), vjp)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every trainable ancestor."""
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got dims {loss.dims}")
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.tracked:
                continue
            if inp.trainable:
                inp.grad += gi.astype(inp.dtype, copy=False)
                continue
            key = id(inp)
            prev = pending.get(key)
            pending[key] = gi if prev is None else prev + gi
    if id(loss) in pending and loss.trainable:
        loss.grad += pending[id(loss)]


# ---------------------------------------------------------------------------
# Broadcasting helpers


def _broadcast_dims(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    if a == b or not b:
        return a
    if not a:
        return b
    if len(a) != len(b):
        raise DimensionError(f"rank mismatch: {a} vs {b}")
    out = []
    for axis, (m, n) in enumerate(zip(a, b)):
        if m != n and m != 1 and n != 1:
            raise DimensionError(f"axis {axis} not broadcastable: {m} vs {n} (dims {a} vs {b})")
        out.append(max(m, n))
    return tuple(out)


def _unbroadcast(g: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    if g.shape == dims:
        return g
    if not dims:
        return np.asarray(g.sum(), dtype=g.dtype)
    axes = tuple(i for i, (m, n) in enumerate(zip(dims, g.shape)) if m == 1 and n != 1)
    return g.sum(axis=axes, keepdims=True)


# ---------------------------------------------------------------------------
# Elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_dims(a.dims, b.dims)
    return make_op(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.dims), _unbroadcast(g, b.dims)))


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_dims(a.dims, b.dims)
    return make_op(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.dims), -_unbroadcast(g, b.dims)))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        return scale(a, float(b))
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_dims(a.dims, b.dims)
    return make_op(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.dims), _unbroadcast(g * a.data, b.dims)))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_op(a.data * a.dtype.type(s), (a,), lambda g: (g * g.dtype.type(s),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype)
    return make_op(s, (a,), lambda g: (g * s * (1 - s),))


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return make_op(np.abs(a.data), (a,), lambda g: (g * sign,))


def elementwise(op: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name: add, sub, mul, relu, sigmoid, scale."""
    if op == "add":
        return add(a, b)
    if op == "sub":
        return sub(a, b)
    if op == "mul":
        return mul(a, b)
    if op == "scale":
        return scale(a, b)
    if op == "relu":
        return relu(a)
    if op == "sigmoid":
        return sigmoid(a)
    raise ValueError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# Reductions and shape ops


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    val = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.dims).copy(),)

    return make_op(np.asarray(val, dtype=a.dtype), (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.dims[i] for i in axes]))
    return scale(sum(a, axes, keepdims), 1.0 / count)


def amax(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    axis %= a.ndim
    idx = np.argmax(a.data, axis=axis)
    idx_k = np.expand_dims(idx, axis)
    val = np.take_along_axis(a.data, idx_k, axis=axis)
    if not keepdims:
        val = np.squeeze(val, axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        out = np.zeros_like(a.data)
        np.put_along_axis(out, idx_k, g, axis=axis)
        return (out,)

    return make_op(val, (a,), vjp)


def reshape(a: Tensor, dims: Sequence[int]) -> Tensor:
    return make_op(a.data.reshape(dims), (a,), lambda g: (g.reshape(a.dims),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return make_op(np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (slice, int)) or p is Ellipsis for p in parts)

    def vjp(g):
        out = np.zeros_like(a.data)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return make_op(np.array(a.data[index]), (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    axis %= tensors[0].ndim
    for t in tensors[1:]:
        for ax, (m, n) in enumerate(zip(t.dims, tensors[0].dims)):
            if ax != axis and m != n:
                raise DimensionError(f"concat: axis {ax} differs ({n} vs {m})")
    bounds = np.cumsum([0] + [t.dims[axis] for t in tensors])

    def vjp(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(lo, hi)
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def split_channels(a: Tensor, groups: int) -> list[Tensor]:
    c = a.dims[1]
    if c % groups:
        raise DimensionError(f"channel axis (1) of size {c} is not divisible into {groups} groups")
    step = c // groups
    return [getitem(a, (slice(None), slice(i * step, (i + 1) * step))) for i in range(groups)]


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum without repeated indices inside one operand."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    lhs, out = spec.replace(" ", "").split("->")
    sa, sb = lhs.split(",")

    def grad_for(g, target: str, other: str, other_data: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
        # indices summed away inside ``target`` alone reappear by broadcasting
        kept = "".join(ch for ch in target if ch in out or ch in other)
        g_kept = np.einsum(f"{out},{other}->{kept}", g, other_data)
        expand = tuple(i for i, ch in enumerate(target) if ch not in kept)
        return np.broadcast_to(np.expand_dims(g_kept, expand), dims).copy() if expand else g_kept

    def vjp(g):
        ga = grad_for(g, sa, sb, b.data, a.dims) if a.tracked else None
        gb = grad_for(g, sb, sa, a.data, b.dims) if b.tracked else None
        return ga, gb

    return make_op(np.einsum(spec, a.data, b.data), (a, b), vjp)


# ---------------------------------------------------------------------------
# Neural-network operators


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis %= x.ndim
    if x.dims[axis] == 0:
        raise DimensionError(f"softmax over empty axis {axis}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return make_op(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects NCHW, got dims {x.dims}")
    if x.dims[2] < 1 or x.dims[3] < 1:
        raise DimensionError(f"empty spatial axes in {x.dims}")
    return mean(x, axis=(2, 3), keepdims=True)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2 (H and W must be even)."""
    n, c, h, w = x.dims
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2 needs even H and W, got {h}x{w}")
    val = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def vjp(g):
        q = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return (q * q.dtype.type(0.25),)

    return make_op(val, (x,), vjp)


def _check_conv(x: Tensor, w: Tensor, bias: Tensor | None, stride: int, pad: int):
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be NCHW, got dims {x.dims}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d weight must be OIKhKw, got dims {w.dims}")
    if x.dims[1] != w.dims[1]:
        raise DimensionError(
            f"conv2d channel axis (1): input has {x.dims[1]} channels, weight expects {w.dims[1]}")
    if bias is not None and bias.dims != (w.dims[0],):
        raise DimensionError(f"conv2d bias axis 0: expected ({w.dims[0]},), got {bias.dims}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d needs stride >= 1 and pad >= 0 (got {stride}, {pad})")
    h, wd = x.dims[2] + 2 * pad, x.dims[3] + 2 * pad
    if h < w.dims[2]:
        raise DimensionError(f"conv2d height axis (2): padded size {h} < kernel {w.dims[2]}")
    if wd < w.dims[3]:
        raise DimensionError(f"conv2d width axis (3): padded size {wd} < kernel {w.dims[3]}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation, NCHW input with OIKhKw weights."""
    _check_conv(x, weight, bias, stride, pad)
    n, c, h, wd = x.dims
    o, _, kh, kw = weight.dims
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data

    if kh == 1 and kw == 1:
        win = xp[:, :, ::stride, ::stride][:, :, :ho, :wo]
        out = np.einsum("nchw,oc->nohw", win, weight.data[:, :, 0, 0], optimize=True)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
        out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gx = gw = gb = None
        if kh == 1 and kw == 1:
            if weight.tracked:
                gw = np.einsum("nohw,nchw->oc", g, win, optimize=True)[:, :, None, None]
            if x.tracked:
                gs = np.einsum("nohw,oc->nchw", g, weight.data[:, :, 0, 0], optimize=True)
                gxp = np.zeros_like(xp)
                gxp[:, :, : stride * ho : stride, : stride * wo : stride] = gs
                gx = gxp
        else:
            if weight.tracked:
                gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            if x.tracked:
                gcol = np.tensordot(g, weight.data, axes=([1], [0]))  # N,Ho,Wo,C,kh,kw
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += \
                            gcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                gx = gxp
        if gx is not None and pad:
            gx = gx[:, :, pad:-pad, pad:-pad]
        if bias is not None and bias.tracked:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_op(out, inputs, vjp)


def interp_matrix(n_out: int, n_in: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Linear interpolation weights (half-pixel centres, edge clamped)."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1 - frac
        m[i, hi] += frac
    return m.astype(dtype)


def resize_bilinear(x: Tensor, height: int, width: int) -> Tensor:
    """Bilinear resize of the last two axes."""
    if x.dims[-2:] == (height, width):
        return x
    rh = interp_matrix(height, x.dims[-2], x.dtype)
    rw = interp_matrix(width, x.dims[-1], x.dtype)
    val = np.einsum("Hh,...hw,Ww->...HW", rh, x.data, rw, optimize=True)
    return make_op(val, (x,), lambda g: (np.einsum("Hh,...HW,Ww->...hw", rh, g, rw, optimize=True),))
