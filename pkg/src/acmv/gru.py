"""Gated recurrent unit over per-view input sequences."""

from __future__ import annotations

import numpy as np

from acmv.errors import EmptyDatasetError, ShapeError
from acmv.nn import tensor as T
from acmv.nn.layers import Module, glorot_uniform
from acmv.nn.tensor import Param


class GruCell(Module):
    """Row-vector convention: gates read ``p @ M + h @ O + b``."""

    def __init__(self, input_dim, hidden_dim, rng, name):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim

        def kernel(rows, tag):
            return Param(glorot_uniform(rng, (rows, hidden_dim), rows, hidden_dim), f"{name}.{tag}")

        self.M_z = kernel(input_dim, "M_z")
        self.M_r = kernel(input_dim, "M_r")
        self.M_h = kernel(input_dim, "M_h")
        self.O_z = kernel(hidden_dim, "O_z")
        self.O_r = kernel(hidden_dim, "O_r")
        self.O_h = kernel(hidden_dim, "O_h")
        self.b_z = Param(np.zeros(hidden_dim), f"{name}.b_z")
        self.b_r = Param(np.zeros(hidden_dim), f"{name}.b_r")
        self.b_h = Param(np.zeros(hidden_dim), f"{name}.b_h")


def gru_step(cell, p, h_prev):
    p, h_prev = T.as_tensor(p), T.as_tensor(h_prev)
    if p.shape[-1] != cell.input_dim or h_prev.shape[-1] != cell.hidden_dim:
        raise ShapeError(
            f"GRU expects input {cell.input_dim} / hidden {cell.hidden_dim}, "
            f"got {p.shape[-1]} / {h_prev.shape[-1]}"
        )
    z = T.sigmoid(p @ cell.M_z + h_prev @ cell.O_z + cell.b_z)
    r = T.sigmoid(p @ cell.M_r + h_prev @ cell.O_r + cell.b_r)
    h_cand = T.tanh(p @ cell.M_h + r * (h_prev @ cell.O_h) + cell.b_h)
    return (1.0 - z) * h_prev + z * h_cand


def gru_unroll(cell, inputs, h0=None):
    """Fold :func:`gru_step` over ``inputs`` (a sequence of step inputs).

    Starts from a zero hidden state unless ``h0`` is given; returns the last
    hidden state.
    """
    inputs = list(inputs)
    if not inputs:
        raise EmptyDatasetError("GRU unroll needs at least one step")
    if h0 is None:
        lead = inputs[0].shape[:-1]
        h0 = np.zeros(lead + (cell.hidden_dim,))
    h = T.as_tensor(h0)
    for p in inputs:
        h = gru_step(cell, p, h)
    return h
