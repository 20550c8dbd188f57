"""Context embedding and the context-aware fusion head.

The head scores each region independently: its per-view predictions, the
embedded context of the predicted interval and the region's POI profile are
concatenated and mapped by one affine layer plus softmax to view weights.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from acmv.context import N_HOURS, WEATHER, ContextRecord, context_codes
from acmv.errors import InvariantError, ShapeError
from acmv.nn import tensor as T
from acmv.nn.layers import Dense, Module, embedding_lookup
from acmv.nn.tensor import Param

VIEW_ORDER = ("dist", "poi", "transport")


class ContextEmbedding(Module):
    def __init__(self, rng, name="context", hour_dim=8, weather_dim=4, holiday_dim=2):
        self.hour_table = Param(rng.uniform(-0.05, 0.05, (N_HOURS, hour_dim)), f"{name}.hour")
        self.weather_table = Param(rng.uniform(-0.05, 0.05, (len(WEATHER), weather_dim)),
                                   f"{name}.weather")
        self.holiday_table = Param(rng.uniform(-0.05, 0.05, (2, holiday_dim)), f"{name}.holiday")

    @property
    def dim(self):
        return self.hour_table.shape[1] + self.weather_table.shape[1] + self.holiday_table.shape[1]

    def embed_codes(self, codes):
        """Embed an int array ``(..., 3)`` of (hour, weather, holiday) codes."""
        codes = np.asarray(codes)
        return T.concat([
            embedding_lookup(self.hour_table, codes[..., 0]),
            embedding_lookup(self.weather_table, codes[..., 1]),
            embedding_lookup(self.holiday_table, codes[..., 2]),
        ], axis=-1)


def embed_context(emb, ctx):
    return emb.embed_codes(np.array(ctx.codes()))


class AttentionHead(Module):
    """Per-region affine map to ``n_views`` logits followed by softmax."""

    def __init__(self, n_views, context_dim, poi_profiles, rng, name="attention"):
        self.n_views = n_views
        self.poi_profiles = np.asarray(poi_profiles, dtype=np.float64)
        in_dim = n_views + context_dim + self.poi_profiles.shape[1]
        self.fc = Dense(in_dim, n_views, rng, f"{name}.fc")


def attention_weights(head, q, e_next, poi_profiles=None):
    """Softmax view weights for every region.

    ``q`` is ``(..., N, V)``, ``e_next`` is ``(..., m)`` (shared by all
    regions), and the POI profiles are ``(N, |C|)``.
    """
    q = T.as_tensor(q)
    e_next = T.as_tensor(e_next)
    profiles = head.poi_profiles if poi_profiles is None else np.asarray(poi_profiles)
    if q.shape[-1] != head.n_views or q.shape[-2] != profiles.shape[0]:
        raise ShapeError(f"q {q.shape} does not match {head.n_views} views / {profiles.shape[0]} regions")
    lead, n = q.shape[:-2], q.shape[-2]
    e_b = T.broadcast_to(T.reshape(e_next, lead + (1, e_next.shape[-1])),
                         lead + (n, e_next.shape[-1]))
    t_b = np.broadcast_to(profiles, lead + profiles.shape)
    features = T.concat([q, e_b, t_b], axis=-1)
    return T.softmax(head.fc(features), axis=-1)


def check_simplex(w, tol=1e-6):
    w = w.value if isinstance(w, T.Tensor) else np.asarray(w)
    if (w < -tol).any() or np.abs(w.sum(axis=-1) - 1.0).max(initial=0.0) > tol:
        raise InvariantError("attention weights are off the probability simplex")


def fuse(q, w):
    """Per-region weighted average of view predictions (last axis)."""
    q, w = T.as_tensor(q), T.as_tensor(w)
    if q.shape != w.shape:
        raise ShapeError(f"predictions {q.shape} and weights {w.shape} differ")
    check_simplex(w)
    fused = T.tsum(q * w, axis=-1)
    # a convex combination lies in [min, max]; clip off the rounding
    return T.rounding_clip(fused, q.value.min(axis=-1), q.value.max(axis=-1))


def average_fuse(q):
    q = T.as_tensor(q)
    return T.mean(q, axis=-1)


def export_attention_csv(path, target_times, weights, views=VIEW_ORDER):
    """Write ``t,n,w_<view>...`` rows; ``weights`` is (T', N, V)."""
    weights = np.asarray(weights)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "n"] + [f"w_{v}" for v in views])
        for t, frame in zip(target_times, weights):
            for n, row in enumerate(frame):
                writer.writerow([int(t), n] + [repr(float(x)) for x in row])


def export_attention_geojson(path, grid, target_times, weights, views=VIEW_ORDER):
    """One square polygon feature per (interval, region) in grid meters."""
    weights = np.asarray(weights)
    half = grid.cell_size_m / 2.0
    xy = grid.centroids()
    features = []
    for t, frame in zip(target_times, weights):
        for n, row in enumerate(frame):
            x, y = xy[n]
            ring = [[x - half, y - half], [x + half, y - half], [x + half, y + half],
                    [x - half, y + half], [x - half, y - half]]
            props = {"t": int(t), "n": n}
            props.update({f"w_{v}": float(val) for v, val in zip(views, row)})
            features.append({"type": "Feature",
                             "geometry": {"type": "Polygon", "coordinates": [ring]},
                             "properties": props})
    with open(path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)


__all__ = [
    "AttentionHead",
    "ContextEmbedding",
    "ContextRecord",
    "attention_weights",
    "average_fuse",
    "context_codes",
    "embed_context",
    "export_attention_csv",
    "export_attention_geojson",
    "fuse",
]
