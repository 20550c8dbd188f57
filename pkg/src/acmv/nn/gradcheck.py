"""Central finite-difference check of tape gradients."""

from __future__ import annotations

import numpy as np

from acmv.nn.tensor import Tape, no_tape


def analytic_grads(fn, params):
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = fn()
        tape.backward(out)
    grads = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()
    return float(out.value), grads


def numeric_grads(fn, params, epsilon=1e-5):
    grads = []
    with no_tape():
        for p in params:
            g = np.zeros_like(p.value)
            flat = p.value.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                f_plus = float(fn().value)
                flat[i] = orig - epsilon
                f_minus = float(fn().value)
                flat[i] = orig
                gflat[i] = (f_plus - f_minus) / (2.0 * epsilon)
            grads.append(g)
    return grads


def grad_check(fn, params, epsilon=1e-5, floor=1e-6):
    """Max elementwise relative error between tape and finite-difference grads.

    ``fn`` takes no arguments and returns a scalar Tensor built from ``params``.
    Relative error uses the denominator ``max(|a|, |n|, floor)``. Central
    differences at ``epsilon = 1e-5`` carry roundoff near 1e-11 absolute, so
    the floor keeps near-zero entries to an absolute test of ``1e-4 * floor``.
    """
    _, analytic = analytic_grads(fn, params)
    numeric = numeric_grads(fn, params, epsilon)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
