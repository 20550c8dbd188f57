"""Grid partition, node indexing, population frames and sliding windows.

Nodes are numbered row-major, ``n = i * cols + j``, everywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from acmv.context import ContextRecord, context_codes
from acmv.errors import BoundsError, ConfigError, EmptyDatasetError, ShapeError


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_size_m: float = 500.0

    def __post_init__(self):
        if int(self.rows) < 1 or int(self.cols) < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not self.cell_size_m > 0:
            raise ConfigError(f"cell_size_m must be positive, got {self.cell_size_m}")

    @property
    def n_nodes(self):
        return self.rows * self.cols

    def centroids(self):
        """(N, 2) array of cell centroids in meters, x east and y south."""
        n = np.arange(self.n_nodes)
        return np.stack([(n % self.cols) * self.cell_size_m,
                         (n // self.cols) * self.cell_size_m], axis=1).astype(np.float64)


def region_index(i, j, grid):
    if not (0 <= i < grid.rows and 0 <= j < grid.cols):
        raise BoundsError(f"cell ({i}, {j}) outside {grid.rows}x{grid.cols} grid")
    return i * grid.cols + j


def region_cell(n, grid):
    """Inverse of :func:`region_index`."""
    if not 0 <= n < grid.n_nodes:
        raise BoundsError(f"region {n} outside [0, {grid.n_nodes})")
    return divmod(n, grid.cols)


def region_centroid(n, grid):
    i, j = region_cell(n, grid)
    return (j * grid.cell_size_m, i * grid.cell_size_m)


@dataclass(frozen=True)
class PopulationFrame:
    values: np.ndarray
    time_index: int

    def as_grid(self, grid):
        if self.values.shape != (grid.n_nodes,):
            raise ShapeError(f"frame of length {self.values.shape} does not fit {grid.n_nodes} nodes")
        return self.values.reshape(1, grid.rows, grid.cols)

    @classmethod
    def from_grid(cls, tensor, time_index):
        return cls(np.asarray(tensor).reshape(-1), time_index)


@dataclass(frozen=True)
class SeriesWindow:
    inputs: np.ndarray  # (L, N)
    target: np.ndarray  # (N,)
    contexts: tuple  # L + 1 ContextRecords
    start: int

    @property
    def length(self):
        return self.inputs.shape[0]

    @property
    def target_time(self):
        return self.start + self.length

    def input_frames(self):
        return [PopulationFrame(row, self.start + k) for k, row in enumerate(self.inputs)]

    def target_frame(self):
        return PopulationFrame(self.target, self.target_time)


def _as_matrix(series):
    if isinstance(series, np.ndarray):
        return np.asarray(series, dtype=np.float64)
    frames = list(series)
    if frames and isinstance(frames[0], PopulationFrame):
        times = [f.time_index for f in frames]
        if times != list(range(times[0], times[0] + len(times))):
            raise ShapeError("population frames are not consecutive in time")
        return np.stack([f.values for f in frames]).astype(np.float64)
    return np.asarray(frames, dtype=np.float64)


def make_windows(series, contexts, L):
    """Slice a (T, N) series into T - L one-step-ahead windows.

    Window ``k`` takes frames ``k .. k+L-1`` as inputs and frame ``k+L`` as
    target, with the L + 1 matching context records.
    """
    X = _as_matrix(series)
    contexts = list(contexts)
    if L < 1:
        raise ConfigError(f"window length must be >= 1, got {L}")
    if X.ndim != 2:
        raise ShapeError(f"series must be (T, N), got {X.shape}")
    T = X.shape[0]
    if len(contexts) != T:
        raise ShapeError(f"{len(contexts)} context records for {T} frames")
    if T < L + 1:
        raise EmptyDatasetError(f"series of length {T} too short for window length {L}")
    return [
        SeriesWindow(X[k:k + L], X[k + L], tuple(contexts[k:k + L + 1]), k)
        for k in range(T - L)
    ]


@dataclass(frozen=True)
class WindowBatch:
    """Windows stacked into arrays for batched evaluation."""

    inputs: np.ndarray  # (B, L, N)
    targets: np.ndarray  # (B, N)
    contexts: np.ndarray  # (B, L + 1, 3) int codes
    target_times: np.ndarray  # (B,)

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx):
        return WindowBatch(self.inputs[idx], self.targets[idx], self.contexts[idx],
                           self.target_times[idx])


def stack_windows(windows):
    if not windows:
        raise EmptyDatasetError("no windows to stack")
    return WindowBatch(
        np.stack([w.inputs for w in windows]),
        np.stack([w.target for w in windows]),
        np.stack([context_codes(w.contexts) for w in windows]),
        np.array([w.target_time for w in windows], dtype=np.int64),
    )


__all__ = [
    "ContextRecord",
    "GridSpec",
    "PopulationFrame",
    "SeriesWindow",
    "WindowBatch",
    "make_windows",
    "region_cell",
    "region_centroid",
    "region_index",
    "stack_windows",
]
