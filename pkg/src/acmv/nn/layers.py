"""Dense, embedding and softmax primitives plus a tiny module container."""

from __future__ import annotations

import numpy as np

from acmv.errors import BoundsError, ShapeError
from acmv.nn import tensor as T
from acmv.nn.tensor import Param


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def dense(x, W, b):
    """Affine map ``y = W^T x + b`` on the last axis of ``x``.

    ``W`` has shape (p, q); ``x`` may carry any number of leading batch axes.
    """
    x, W, b = T.as_tensor(x), T.as_tensor(W), T.as_tensor(b)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: x {x.shape}, W {W.shape}, b {b.shape}")
    return T.add(T.matmul(x, W), b)


def embedding_lookup(table, index):
    table = T.as_tensor(table)
    idx = np.asarray(index)
    if idx.ndim == 0 and not 0 <= int(idx) < table.shape[0]:
        raise BoundsError(f"index {int(idx)} outside [0, {table.shape[0]})")
    return T.embedding(table, idx)


def softmax(z, axis=-1):
    return T.softmax(z, axis=axis)


class Module:
    """Container whose Params are discovered in attribute insertion order."""

    def parameters(self):
        out = []
        for value in self.__dict__.values():
            _collect(value, out)
        return out

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _collect(value, out):
    if isinstance(value, Param):
        out.append(value)
    elif isinstance(value, Module):
        out.extend(value.parameters())
    elif isinstance(value, (list, tuple)):
        for item in value:
            _collect(item, out)
    elif isinstance(value, dict):
        for item in value.values():
            _collect(item, out)


class Dense(Module):
    def __init__(self, in_dim, out_dim, rng, name):
        self.W = Param(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim), f"{name}.W")
        self.b = Param(np.zeros(out_dim), f"{name}.b")

    def __call__(self, x):
        return dense(x, self.W, self.b)
