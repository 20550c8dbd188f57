"""Error metrics in population units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from acmv.errors import ShapeError, ValidationError


@dataclass(frozen=True)
class EvalResult:
    mae: float
    rmse: float
    wape: float  # percent
    region_mae: np.ndarray


def evaluate(pred, truth):
    """MAE, RMSE and WAPE (100 * sum|err| / sum|truth|) over all entries.

    Arrays are (T', N); a single frame (N,) is accepted too.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {truth.shape} differ")
    mass = np.abs(truth).sum()
    if mass == 0:
        raise ValidationError("WAPE is undefined for all-zero truth")
    err = np.abs(truth - pred)
    return EvalResult(
        mae=float(err.mean()),
        rmse=float(np.sqrt(((truth - pred) ** 2).mean())),
        wape=float(100.0 * err.sum() / mass),
        region_mae=err.mean(axis=0),
    )
