"""Non-learned reference forecasters."""

from __future__ import annotations

import numpy as np

from acmv.errors import EmptyDatasetError, ValidationError


def _key(ctx):
    return (bool(ctx.holiday), int(ctx.hour))


class HistoricalAverage:
    """Per-region mean of training frames sharing (day type, hour).

    Day type is the holiday flag; the synthetic calendar has no weekdays.
    """

    def __init__(self, series, contexts):
        series = np.asarray(series, dtype=np.float64)
        if series.shape[0] != len(contexts):
            raise ValidationError("series and contexts differ in length")
        if series.shape[0] == 0:
            raise EmptyDatasetError("historical average needs training frames")
        sums, counts = {}, {}
        for row, ctx in zip(series, contexts):
            k = _key(ctx)
            if k in sums:
                sums[k] = sums[k] + row
                counts[k] += 1
            else:
                sums[k] = row.copy()
                counts[k] = 1
        self.means = {k: sums[k] / counts[k] for k in sums}

    def predict(self, ctx):
        k = _key(ctx)
        if k not in self.means:
            raise ValidationError(f"no training frame with holiday={k[0]} hour={k[1]}")
        return self.means[k]


def historical_average(train_series, train_contexts, query):
    """Predicted frame for ``query`` (a ContextRecord)."""
    return HistoricalAverage(train_series, train_contexts).predict(query)


def persistence(window):
    """Last observed frame, unchanged."""
    inputs = np.asarray(window.inputs)
    if inputs.shape[0] == 0:
        raise EmptyDatasetError("empty window")
    return inputs[-1].copy()
