"""Reverse-mode autodiff on numpy arrays.

Operations executed while a :class:`Tape` is active are appended to it in
creation order; ``Tape.backward`` replays them in reverse. Outside a tape the
same functions compute plain values, which is what evaluation uses.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.special import expit

from acmv.errors import BoundsError, NumericError, ShapeError

_state = threading.local()


def _current_tape():
    return getattr(_state, "tape", None)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.value

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class Param(Tensor):
    """Learnable leaf tensor with a persistent gradient accumulator."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


class Tape:
    """Records differentiable operations for one forward/backward pass."""

    def __init__(self):
        self.records = []
        self._prev = None

    def __enter__(self):
        self._prev = _current_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def backward(self, out, seed=None):
        if not out.requires_grad:
            return
        g0 = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        out.grad = g0 if out.grad is None else out.grad + g0
        for node, parents, vjp in reversed(self.records):
            g = node.grad
            if g is None:
                continue
            pgrads = vjp(g)
            for p, pg in zip(parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                if isinstance(p, Param):
                    p.grad += pg
                elif p.grad is None:
                    # never mutated in place, so sharing the buffer is safe
                    p.grad = pg
                else:
                    p.grad = p.grad + pg
            if not isinstance(node, Param):
                node.grad = None
        self.records.clear()


class no_tape:
    """Context manager that suspends recording."""

    def __enter__(self):
        self._prev = _current_tape()
        _state.tape = None

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value, parents, vjp):
    tape = _current_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.records.append((out, parents, vjp))
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise -----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.value + b.value, (a, b),
                   lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.value - b.value, (a, b),
                   lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b),
                   lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def neg(a):
    a = as_tensor(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def square(a):
    a = as_tensor(a)
    av = a.value
    return _record(av * av, (a,), lambda g: (2.0 * av * g,))


def sigmoid(a):
    a = as_tensor(a)
    y = expit(a.value)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    return _record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def identity(a):
    return as_tensor(a)


def rounding_clip(a, lo, hi):
    """Clip to ``[lo, hi]`` with the gradient passed through unchanged.

    Meant for bounds the exact value already satisfies, so only rounding
    error is removed and the identity derivative is the true one.
    """
    a = as_tensor(a)
    return _record(np.clip(a.value, lo, hi), (a,), lambda g: (g,))


ACTIVATIONS = {"relu": relu, "tanh": tanh, "identity": identity}


# -- reductions and shape ----------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _record(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.value.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swapaxes(a, ax1, ax2):
    a = as_tensor(a)
    return _record(np.swapaxes(a.value, ax1, ax2), (a,),
                   lambda g: (np.swapaxes(g, ax1, ax2),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _record(np.broadcast_to(a.value, shape).copy(), (a,),
                   lambda g: (unbroadcast(g, old),))


def getitem(a, key):
    a = as_tensor(a)
    shape = a.shape

    keys = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (int, np.integer, slice)) or k is None or k is Ellipsis for k in keys)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _record(a.value[key], (a,), vjp)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _record(value, tuple(tensors),
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.stack([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    n = len(tensors)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _record(value, tuple(tensors), vjp)


# -- linear algebra --------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    try:
        if av.ndim > 2 and bv.ndim == 2:
            value = (av.reshape(-1, av.shape[-1]) @ bv).reshape(av.shape[:-1] + bv.shape[1:])
        else:
            value = np.matmul(av, bv)
    except ValueError as exc:
        raise ShapeError(f"matmul {av.shape} @ {bv.shape}: {exc}") from None

    def vjp(g):
        ga = gb = None
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 1:
            if a.requires_grad:
                ga = unbroadcast(np.matmul(bv, g[..., None])[..., 0], av.shape)
            if b.requires_grad:
                gb = unbroadcast(av[:, None] * g[..., None, :], bv.shape)
            return ga, gb
        if bv.ndim == 1:
            if a.requires_grad:
                ga = unbroadcast(g[..., None] * bv, av.shape)
            if b.requires_grad:
                gb = np.einsum("...mk,...m->k", av, g)
            return ga, gb
        if bv.ndim == 2:
            # fold batch axes of a into rows: one GEMM per gradient
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ bv.T).reshape(av.shape)
            if b.requires_grad:
                gb = av.reshape(-1, av.shape[-1]).T @ g2
            return ga, gb
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape)
        return ga, gb

    return _record(value, (a, b), vjp)


def graph_matmul(operator, h):
    """Left-multiply the leading (node) axis of ``h`` by a fixed matrix."""
    h = as_tensor(h)
    op = np.asarray(operator, dtype=np.float64)
    if op.ndim != 2 or op.shape[1] != h.shape[0]:
        raise ShapeError(f"operator {op.shape} does not act on node axis of {h.shape}")
    op_t = np.ascontiguousarray(op.T)
    rest = h.shape[1:]

    def apply(mat, x):
        return (mat @ x.reshape(x.shape[0], -1)).reshape((mat.shape[0],) + rest)

    return _record(apply(op, h.value), (h,), lambda g: (apply(op_t, g),))


def transpose(a, axes):
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def softmax(z, axis=-1):
    z = as_tensor(z)
    if np.isnan(z.value).any():
        raise NumericError("softmax received NaN logits")
    shifted = z.value - z.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (z,), vjp)


def embedding(table, index):
    """Gather rows of ``table``; gradients scatter-add back into those rows."""
    table = as_tensor(table)
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise BoundsError(f"embedding index must be integer, got {idx.dtype}")
    k = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise BoundsError(f"embedding index out of range [0, {k})")
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _record(table.value[idx], (table,), vjp)
