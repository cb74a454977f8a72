"""Reverse-mode autodiff over dense numpy arrays.

A forward pass runs inside a `Tape` context; every primitive that can
influence a parameter appends one backward closure to the tape. Creation
order is topological order, so `backward` is a single reversed sweep.
Outside a tape the same primitives run plain numpy (generation/eval mode).

Gradients accumulate: a tensor used k times receives the sum of k
contributions. Closures may hand ownership of a freshly allocated gradient
array to `_accum_owned`; anything that merely forwards the upstream array
must go through `_accum` (which copies on first touch) so sibling inputs
never alias each other's buffers.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, TapeError

_TAPE = None  # innermost active tape, at most one


class Tape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def __enter__(self):
        global _TAPE
        if _TAPE is not None:
            raise TapeError("a tape is already active; tapes do not nest")
        _TAPE = self
        return self

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = None
        return False


def active_tape():
    return _TAPE


class Tensor:
    """Dense array plus gradient slot; node of the recorded graph."""

    __slots__ = ("data", "grad", "name", "tape")

    def __init__(self, data, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.name = name
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={tuple(self.data.shape)}, dtype={self.data.dtype})"

    # arithmetic sugar; the real work is in the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _record(out, backward_fn):
    tape = _TAPE
    if tape is not None:
        out.tape = tape
        tape._nodes.append(backward_fn)
    return out


def _accum(t, g):
    """Accumulate a gradient array the closure does NOT own."""
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _accum_owned(t, g):
    """Accumulate a gradient array the closure hands over (never reused)."""
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g


def backward(loss):
    """Populate gradients of everything reachable from `loss`; clears the tape.

    `loss` must be a scalar produced on the currently known tape.
    """
    tape = loss.tape
    if tape is None or not tape._nodes:
        raise TapeError("loss was not produced on a live tape")
    if loss.data.shape != ():
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for fn in reversed(tape._nodes):
        fn()
    tape._nodes.clear()


def _as_const(x, like):
    """Plain arrays/floats act as constants (no gradient)."""
    if isinstance(x, Tensor):
        return x
    t = Tensor(np.asarray(x, dtype=like.data.dtype))
    return t


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (bias-style broadcasting only)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    b = _as_const(b, a)
    out = Tensor(a.data + b.data)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, bwd)


def sub(a, b):
    b = _as_const(b, a)
    out = Tensor(a.data - b.data)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum_owned(b, _unbroadcast(-g, b.data.shape))

    return _record(out, bwd)


def mul(a, b):
    b = _as_const(b, a)
    out = Tensor(a.data * b.data)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, _unbroadcast(g * b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, bwd)


def scale(a, k):
    """Multiply by a python scalar."""
    k = a.data.dtype.type(k)
    out = Tensor(a.data * k)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g * k)

    return _record(out, bwd)


def add_const(a, k):
    out = Tensor(a.data + a.data.dtype.type(k))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum(a, g)

    return _record(out, bwd)


def matmul(a, b):
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"matmul {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g @ b.data.T)
        _accum_owned(b, a.data.T @ g)

    return _record(out, bwd)


def relu(a):
    out = Tensor(np.maximum(a.data, 0))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g * (a.data > 0))

    return _record(out, bwd)


def tanh(a):
    out = Tensor(np.tanh(a.data))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g * (1.0 - out.data * out.data))

    return _record(out, bwd)


def exp(a):
    out = Tensor(np.exp(a.data))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g * out.data)

    return _record(out, bwd)


def clamp(a, lo, hi):
    """Hard clip; gradient is zero outside the open interval."""
    out = Tensor(np.clip(a.data, lo, hi))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g * ((a.data > lo) & (a.data < hi)))

    return _record(out, bwd)


def square(a):
    out = Tensor(a.data * a.data)

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, 2.0 * a.data * g)

    return _record(out, bwd)


def reduce_sum(a, axis=None):
    out = Tensor(a.data.sum(axis=axis))

    def bwd():
        g = out.grad
        if g is None:
            return
        if axis is None:
            _accum_owned(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            _accum_owned(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _record(out, bwd)


def reduce_mean(a, axis=None):
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / n)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))

    def bwd():
        g = out.grad
        if g is None:
            return
        _accum_owned(a, g.reshape(a.data.shape))

    return _record(out, bwd)


def concat(parts, axis=-1):
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]

    def bwd():
        g = out.grad
        if g is None:
            return
        offset = 0
        for p, s in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + s)
            _accum(p, g[tuple(idx)])
            offset += s

    return _record(out, bwd)


def take_rows(a, index):
    """Select rows of a 2-D tensor (gradient scatters back)."""
    index = np.asarray(index)
    out = Tensor(a.data[index])

    def bwd():
        g = out.grad
        if g is None:
            return
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        _accum_owned(a, buf)

    return _record(out, bwd)
