"""View graphs over grid regions and their scaled Laplacians.

Three affinities are built: a thresholded Gaussian kernel on centroid
distance, cosine similarity of TF-IDF POI profiles, and shared-line counts of
transport indicators. Diagonals are always zero; self information reaches the
convolution through the zeroth Chebyshev term.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from acmv.errors import ConfigError, ShapeError, ValidationError

VIEWS = ("dist", "poi", "transport")


@dataclass(frozen=True)
class PoiProfile:
    tfidf: np.ndarray
    raw_counts: np.ndarray


@dataclass(frozen=True)
class TransportProfile:
    lines: np.ndarray


@dataclass(frozen=True)
class ViewGraph:
    kind: str
    adjacency: np.ndarray
    scaled_laplacian: np.ndarray
    lambda_max: float
    lambda_fallback: bool = False

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]


def build_distance_graph(grid, theta=1000.0, kappa=2000.0):
    if not theta > 0 or not kappa > 0:
        raise ConfigError(f"theta and kappa must be positive, got {theta}, {kappa}")
    xy = grid.centroids()
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    A = np.where(dist <= kappa, np.exp(-dist ** 2 / (2.0 * theta ** 2)), 0.0)
    np.fill_diagonal(A, 0.0)
    return make_view_graph("dist", A)


def compute_tfidf(counts):
    """TF-IDF POI profiles from an (N, |C|) count matrix (natural log IDF).

    Regions without any POI get a zero profile; categories absent everywhere
    score zero.
    """
    w = np.asarray(counts, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"POI counts must be (N, C), got {w.shape}")
    n_regions = w.shape[0]
    totals = w.sum(axis=1, keepdims=True)
    tf = np.divide(w, totals, out=np.zeros_like(w), where=totals > 0)
    df = (w != 0).sum(axis=0)
    idf = np.log(n_regions / np.maximum(df, 1))
    idf[df == 0] = 0.0
    tfidf = tf * idf
    raw = np.asarray(counts).astype(np.int64)
    return [PoiProfile(tfidf[n], raw[n]) for n in range(n_regions)]


def tfidf_matrix(profiles):
    return np.stack([p.tfidf for p in profiles])


def cosine_similarity_matrix(X):
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = X / safe[:, None]
    S = U @ U.T
    zero = norms == 0
    S[zero, :] = 0.0
    S[:, zero] = 0.0
    return np.clip(S, -1.0, 1.0)


def build_poi_graph(profiles, gamma=0.5):
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    X = tfidf_matrix(profiles) if not isinstance(profiles, np.ndarray) else profiles
    S = cosine_similarity_matrix(X)
    A = np.where(S >= gamma, S, 0.0)
    # cos is symmetric up to rounding in U @ U.T
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0.0)
    return make_view_graph("poi", A)


def build_transport_graph(profiles):
    if isinstance(profiles, np.ndarray):
        G = profiles.astype(np.float64)
    else:
        lengths = {len(getattr(p, "lines", p)) for p in profiles}
        if len(lengths) > 1:
            raise ShapeError(f"transport profiles have mixed line counts {sorted(lengths)}")
        G = np.stack([getattr(p, "lines", p) for p in profiles]).astype(np.float64)
    if G.ndim != 2:
        raise ShapeError(f"transport profiles must be (N, M), got {G.shape}")
    A = G @ G.T
    np.fill_diagonal(A, 0.0)
    return make_view_graph("transport", A)


def normalized_laplacian(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"adjacency must be square, got {A.shape}")
    if not np.array_equal(A, A.T):
        raise ValidationError("adjacency is not symmetric")
    if (A < 0).any():
        raise ValidationError("adjacency has negative entries")
    deg = A.sum(axis=1)
    d_inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    d_inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(A.shape[0]) - d_inv_sqrt[:, None] * A * d_inv_sqrt[None, :]


def power_iteration(L, shift=1.0, rtol=1e-8, max_iter=10_000, seed=0):
    """Largest eigenvalue of symmetric ``L`` by power iteration on ``L + shift*I``.

    Returns ``(estimate, converged)``. The shift makes ``L + I`` positive
    definite for Laplacian spectra so the dominant eigenvalue is the largest.
    Convergence is declared when the eigen-residual ``|Mv - rho v|`` drops
    below ``rtol**0.75 * |rho|``. The Rayleigh quotient error is at most
    residual**2 / gap, so this keeps it under ``rtol`` for spectral gaps down
    to ``sqrt(rtol)``; a test on the step change in ``rho`` alone stops early
    when the top of the spectrum is clustered.
    """
    n = L.shape[0]
    M = L + shift * np.eye(n)
    v = np.random.default_rng(seed).uniform(0.5, 1.5, size=n)
    v /= np.linalg.norm(v)
    tol = rtol ** 0.75
    rayleigh = 0.0
    for _ in range(max_iter):
        w = M @ v
        rayleigh = float(v @ w)
        if np.linalg.norm(w - rayleigh * v) <= tol * abs(rayleigh):
            return rayleigh - shift, True
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0, False
        v = w / norm
    return rayleigh - shift, False


def estimate_lambda_max(L, rtol=1e-8, max_iter=10_000):
    """Largest eigenvalue of a normalized Laplacian, falling back to 2.0."""
    return _estimate_with_flag(L, rtol, max_iter)[0]


def _estimate_with_flag(L, rtol=1e-8, max_iter=10_000):
    value, converged = power_iteration(L, rtol=rtol, max_iter=max_iter)
    if not converged or not value > 0:
        warnings.warn("power iteration did not converge; using lambda_max = 2", RuntimeWarning)
        return 2.0, True
    return value, False


def scaled_laplacian(L, lambda_max):
    if not lambda_max > 0:
        raise ConfigError(f"lambda_max must be positive, got {lambda_max}")
    return 2.0 * np.asarray(L) / lambda_max - np.eye(L.shape[0])


def make_view_graph(kind, A):
    L = normalized_laplacian(A)
    lam, fallback = _estimate_with_flag(L)
    return ViewGraph(kind, A, scaled_laplacian(L, lam), lam, fallback)


def export_graphs_csv(graphs, path):
    """Write nonzero upper-triangle edges as ``kind,n,m,weight`` rows.

    ``graphs`` is an iterable of ViewGraph or a mapping of kind to ViewGraph.
    """
    if isinstance(graphs, dict):
        graphs = graphs.values()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "n", "m", "weight"])
        for g in graphs:
            rows, cols = np.nonzero(np.triu(g.adjacency, k=1))
            for n, m in zip(rows, cols):
                writer.writerow([g.kind, int(n), int(m), repr(float(g.adjacency[n, m]))])


def build_view_graphs(grid, poi_counts, transport, theta=1000.0, kappa=2000.0, gamma=0.5):
    """All three views plus the (N, |C|) TF-IDF matrix used by the attention head."""
    profiles = compute_tfidf(poi_counts)
    graphs = {
        "dist": build_distance_graph(grid, theta, kappa),
        "poi": build_poi_graph(profiles, gamma),
        "transport": build_transport_graph(np.asarray(transport)),
    }
    return graphs, tfidf_matrix(profiles)
