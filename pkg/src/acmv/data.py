"""Robust scaling, chronological splits and the scenario bundle format."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from acmv.context import WEATHER, ContextRecord
from acmv.errors import ConfigError, EmptyDatasetError, ParseError, StateError, ValidationError
from acmv.grid import GridSpec, make_windows, stack_windows


@dataclass
class Scaler:
    """Interquartile scaling ``(x - q1) / (q3 - q1)``; unfitted until q1/q3 are set."""

    q1: float | None = None
    q3: float | None = None

    @property
    def fitted(self):
        return self.q1 is not None and self.q3 is not None

    def _require(self):
        if not self.fitted:
            raise StateError("scaler has not been fitted")

    def scale(self, x):
        self._require()
        return (np.asarray(x, dtype=np.float64) - self.q1) / (self.q3 - self.q1)

    def unscale(self, x):
        self._require()
        return np.asarray(x, dtype=np.float64) * (self.q3 - self.q1) + self.q1


def fit_scaler(values):
    """Fit quartiles of ``values`` with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2 or np.unique(v).size < 2:
        raise ValidationError("scaler needs at least two distinct training values")
    q1, q3 = np.percentile(v, [25.0, 75.0], method="linear")
    if not q3 > q1:
        raise ValidationError(f"degenerate interquartile range: q1 = q3 = {q1}")
    return Scaler(float(q1), float(q3))


def scale(x, scaler):
    return scaler.scale(x)


def unscale(x, scaler):
    return scaler.unscale(x)


def fit_scaler_on_windows(train_windows):
    """Fit on every frame touched by the training windows, each frame once."""
    frames = {}
    for w in train_windows:
        for k, row in enumerate(w.inputs):
            frames[w.start + k] = row
        frames[w.target_time] = w.target
    if not frames:
        raise EmptyDatasetError("no training windows to fit the scaler on")
    return fit_scaler(np.stack([frames[t] for t in sorted(frames)]))


def chronological_split(windows, fractions=(0.8, 0.1, 0.1)):
    """Contiguous train/val/test split in time order."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    n = len(windows)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    parts = (windows[:n_train], windows[n_train:n_train + n_val], windows[n_train + n_val:])
    for name, part in zip(("train", "val", "test"), parts):
        if not part:
            raise EmptyDatasetError(f"{name} split is empty ({n} windows, fractions {fractions})")
    return parts


@dataclass
class CityScenario:
    grid: GridSpec
    poi_counts: np.ndarray  # (N, |C|) ints
    transport: np.ndarray  # (N, M) 0/1
    series: np.ndarray  # (T, N)
    contexts: list
    seed: int | None = None
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n_nodes
        if self.poi_counts.shape[0] != n or self.transport.shape[0] != n:
            raise ValidationError("POI/transport profiles do not cover every region")
        if self.series.ndim != 2 or self.series.shape[1] != n:
            raise ValidationError(f"series shape {self.series.shape} does not match {n} regions")
        if len(self.contexts) != self.series.shape[0]:
            raise ValidationError("context records do not cover every interval")

    @property
    def n_steps(self):
        return self.series.shape[0]

    @property
    def station_regions(self):
        return np.flatnonzero(self.transport.any(axis=1))


@dataclass
class Dataset:
    """Scaled window batches for one scenario split plus the fitted scaler."""

    scaler: Scaler
    train: object
    val: object
    test: object
    train_windows: list
    val_windows: list
    test_windows: list


def _scaled_batch(windows, scaler):
    b = stack_windows(windows)
    return type(b)(scaler.scale(b.inputs), scaler.scale(b.targets), b.contexts, b.target_times)


def prepare_dataset(scenario, window, fractions=(0.8, 0.1, 0.1)):
    windows = make_windows(scenario.series, scenario.contexts, window)
    train, val, test = chronological_split(windows, fractions)
    scaler = fit_scaler_on_windows(train)
    return Dataset(scaler, _scaled_batch(train, scaler), _scaled_batch(val, scaler),
                   _scaled_batch(test, scaler), train, val, test)


# -- bundle IO ---------------------------------------------------------------

SERIES_FILE = "series.csv"
CONTEXT_FILE = "contexts.csv"
POI_FILE = "poi.csv"
TRANSPORT_FILE = "transport.csv"
META_FILE = "grid.json"


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def save_scenario(scenario, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    T, N = scenario.series.shape
    _write_csv(os.path.join(out_dir, SERIES_FILE), ["t", "n", "value"],
               ((t, n, _fmt(scenario.series[t, n])) for t in range(T) for n in range(N)))
    _write_csv(os.path.join(out_dir, CONTEXT_FILE), ["t", "hour", "weather", "holiday"],
               ((t, c.hour, c.weather, int(c.holiday)) for t, c in enumerate(scenario.contexts)))
    C = scenario.poi_counts.shape[1]
    _write_csv(os.path.join(out_dir, POI_FILE), ["n", "category", "count"],
               ((n, c, int(scenario.poi_counts[n, c])) for n in range(N) for c in range(C)))
    M = scenario.transport.shape[1]
    _write_csv(os.path.join(out_dir, TRANSPORT_FILE), ["n", "line", "flag"],
               ((n, m, int(scenario.transport[n, m])) for n in range(N) for m in range(M)))
    meta = {
        "rows": scenario.grid.rows,
        "cols": scenario.grid.cols,
        "cell_size_m": scenario.grid.cell_size_m,
        "n_categories": int(C),
        "n_lines": int(M),
        "seed": scenario.seed,
        "generator": scenario.generator,
    }
    with open(os.path.join(out_dir, META_FILE), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_rows(path, columns):
    """Yield ``(line_number, row_dict)`` after checking the header."""
    if not os.path.exists(path):
        raise ParseError("file not found", path=path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in columns:
            if col not in header:
                raise ParseError(f"missing column {col!r}", path=path, line=1)
        for row in reader:
            yield reader.line_num, row


def _int(row, key, path, line):
    try:
        return int(row[key])
    except (TypeError, ValueError):
        raise ParseError(f"column {key!r}: expected integer, got {row[key]!r}", path=path, line=line) from None


def _float(row, key, path, line):
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise ParseError(f"column {key!r}: expected number, got {row[key]!r}", path=path, line=line) from None


def _fill_matrix(path, shape, rows, key_cols, value_col, convert):
    out = np.full(shape, np.nan)
    for line, row in rows:
        i, j = (_int(row, c, path, line) for c in key_cols)
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise ParseError(f"index ({i}, {j}) outside {shape}", path=path, line=line)
        if not np.isnan(out[i, j]):
            raise ParseError(f"duplicate entry ({i}, {j})", path=path, line=line)
        out[i, j] = convert(row, value_col, path, line)
    if np.isnan(out).any():
        i, j = np.argwhere(np.isnan(out))[0]
        raise ParseError(f"no entry for ({i}, {j})", path=path)
    return out


def load_series(path, n_nodes):
    rows = list(_read_rows(path, ("t", "n", "value")))
    if not rows:
        raise EmptyDatasetError(f"{path}: population series is empty")
    T = max(_int(r, "t", path, ln) for ln, r in rows) + 1
    return _fill_matrix(path, (T, n_nodes), rows, ("t", "n"), "value", _float)


def load_contexts(path):
    out = {}
    for line, row in _read_rows(path, ("t", "hour", "weather", "holiday")):
        t = _int(row, "t", path, line)
        weather = row["weather"].strip()
        holiday = _int(row, "holiday", path, line)
        if weather not in WEATHER:
            raise ParseError(f"unknown weather {weather!r}", path=path, line=line)
        if holiday not in (0, 1):
            raise ParseError(f"holiday must be 0 or 1, got {holiday}", path=path, line=line)
        try:
            out[t] = ContextRecord(_int(row, "hour", path, line), weather, bool(holiday))
        except Exception as exc:
            raise ParseError(str(exc), path=path, line=line) from None
    if sorted(out) != list(range(len(out))):
        raise ParseError("context rows must cover t = 0 .. T-1 exactly once", path=path)
    return [out[t] for t in range(len(out))]


def load_scenario(in_dir):
    meta_path = os.path.join(in_dir, META_FILE)
    if not os.path.exists(meta_path):
        raise ParseError("file not found", path=meta_path)
    with open(meta_path) as fh:
        meta = json.load(fh)
    grid = GridSpec(int(meta["rows"]), int(meta["cols"]), float(meta["cell_size_m"]))
    n = grid.n_nodes
    series = load_series(os.path.join(in_dir, SERIES_FILE), n)
    contexts = load_contexts(os.path.join(in_dir, CONTEXT_FILE))
    if len(contexts) != series.shape[0]:
        raise ParseError(f"{len(contexts)} context rows for {series.shape[0]} series intervals",
                         path=os.path.join(in_dir, CONTEXT_FILE))
    poi_path = os.path.join(in_dir, POI_FILE)
    poi = _fill_matrix(poi_path, (n, int(meta["n_categories"])),
                       _read_rows(poi_path, ("n", "category", "count")),
                       ("n", "category"), "count", _int).astype(np.int64)
    tr_path = os.path.join(in_dir, TRANSPORT_FILE)
    transport = _fill_matrix(tr_path, (n, int(meta["n_lines"])),
                             _read_rows(tr_path, ("n", "line", "flag")),
                             ("n", "line"), "flag", _int).astype(np.int64)
    if not np.isin(transport, (0, 1)).all():
        raise ParseError("transport flags must be 0 or 1", path=tr_path)
    return CityScenario(grid, poi, transport, series, contexts, meta.get("seed"),
                        meta.get("generator") or {})
