"""Chebyshev polynomial graph convolution."""

from __future__ import annotations

import numpy as np

from acmv.errors import ConfigError, ShapeError
from acmv.nn import tensor as T
from acmv.nn.layers import Module, glorot_uniform
from acmv.nn.tensor import Param


def cheb_basis(Ltilde, H, K):
    """Return ``[T_0(L~) H, ..., T_{K-1}(L~) H]`` via the three-term recursion.

    ``H`` is (N, ..., F): nodes first, features last, any batch axes between.
    Only node-by-feature panels are formed; polynomial matrices never are.
    """
    if K < 1:
        raise ConfigError(f"Chebyshev order K must be >= 1, got {K}")
    H = T.as_tensor(H)
    Ltilde = np.asarray(Ltilde, dtype=np.float64)
    if Ltilde.ndim != 2 or Ltilde.shape[0] != Ltilde.shape[1] or Ltilde.shape[1] != H.shape[0]:
        raise ShapeError(f"scaled Laplacian {Ltilde.shape} incompatible with signal {H.shape}")
    basis = [H]
    if K > 1:
        basis.append(T.graph_matmul(Ltilde, H))
    for _ in range(2, K):
        basis.append(2.0 * T.graph_matmul(Ltilde, basis[-1]) - basis[-2])
    return basis


class ChebLayer(Module):
    """``f(sum_k T_k(L~) H theta_k)`` with ``theta`` of shape (K, F_in, F_out)."""

    def __init__(self, K, in_features, out_features, rng, name, activation="relu", bias=False):
        if K < 1:
            raise ConfigError(f"Chebyshev order K must be >= 1, got {K}")
        if activation not in T.ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.K = K
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        self.theta = Param(
            glorot_uniform(rng, (K, in_features, out_features), K * in_features, out_features),
            f"{name}.theta",
        )
        self.bias = Param(np.zeros(out_features), f"{name}.bias") if bias else None

    def __call__(self, Ltilde, H):
        return chebconv_forward(self, Ltilde, H)


def chebconv_forward(layer, Ltilde, H):
    H = T.as_tensor(H)
    if H.shape[-1] != layer.in_features:
        raise ShapeError(f"layer expects {layer.in_features} input features, got {H.shape[-1]}")
    basis = cheb_basis(Ltilde, H, layer.K)
    # (..., N, K*F_in) @ (K*F_in, F_out)
    stacked = T.concat(basis, axis=-1)
    weight = T.reshape(layer.theta, (layer.K * layer.in_features, layer.out_features))
    out = T.matmul(stacked, weight)
    if layer.bias is not None:
        out = out + layer.bias
    return T.ACTIVATIONS[layer.activation](out)

