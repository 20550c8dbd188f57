"""Train-and-evaluate runners for baselines, ablations and the full model."""

from __future__ import annotations

import csv
import logging
import statistics
import traceback
from dataclasses import dataclass, field

import numpy as np

from acmv.baselines import HistoricalAverage
from acmv.data import prepare_dataset
from acmv.errors import ConfigError
from acmv.graphs import build_view_graphs
from acmv.metrics import evaluate
from acmv.model import TEMPORAL, build_variant, predict_batch, train

log = logging.getLogger(__name__)

# name -> (views, fusion); None marks a non-learned baseline
VARIANTS = {
    "ha": None,
    "persistence": None,
    "gru": ((TEMPORAL,), "attention"),
    "dist": (("dist",), "attention"),
    "poi": (("poi",), "attention"),
    "transport": (("transport",), "attention"),
    "dist+poi": (("dist", "poi"), "attention"),
    "dist+transport": (("dist", "transport"), "attention"),
    "poi+transport": (("poi", "transport"), "attention"),
    "mv-gcns": (("dist", "poi", "transport"), "average"),
    "acmv-gcns": (("dist", "poi", "transport"), "attention"),
}
BASELINE_VARIANTS = ("ha", "persistence", "gru", "mv-gcns", "acmv-gcns")
ABLATION_VARIANTS = ("dist", "poi", "transport", "dist+poi", "dist+transport", "poi+transport",
                   "acmv-gcns")


def check_variants(names):
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants {unknown}; valid names: {', '.join(VARIANTS)}")
    return list(names)


@dataclass
class VariantRun:
    variant: str
    seed: int
    result: object = None  # EvalResult
    predictions: np.ndarray | None = None
    weights: np.ndarray | None = None
    scaled: tuple | None = None  # (fused (T', N), per-view (T', N, V)) before unscaling
    views: tuple = ()
    report: object = None
    error: str | None = None


@dataclass
class Comparison:
    runs: list = field(default_factory=list)
    target_times: np.ndarray | None = None
    truth: np.ndarray | None = None

    def aggregate(self):
        """Rows of per-variant mean/std over successful seeds, declaration order."""
        rows = []
        seen = []
        for run in self.runs:
            if run.variant not in seen:
                seen.append(run.variant)
        for name in seen:
            ok = [r.result for r in self.runs if r.variant == name and r.result is not None]
            if not ok:
                continue
            row = {"variant": name, "n_runs": len(ok)}
            for metric in ("mae", "rmse", "wape"):
                vals = [float(getattr(res, metric)) for res in ok]
                # exact summation, so identical seeds give a std of exactly zero
                row[f"{metric}_mean"] = statistics.fmean(vals)
                row[f"{metric}_std"] = statistics.pstdev(vals)
            rows.append(row)
        return rows

    def mean_mae(self, variant):
        for row in self.aggregate():
            if row["variant"] == variant:
                return row["mae_mean"]
        raise KeyError(variant)

    def write_csv(self, runs_path, aggregate_path):
        with open(runs_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variant", "seed", "mae", "rmse", "wape"])
            for r in self.runs:
                if r.result is None:
                    continue
                writer.writerow([r.variant, r.seed, repr(r.result.mae), repr(r.result.rmse),
                                 repr(r.result.wape)])
        rows = self.aggregate()
        with open(aggregate_path, "w", newline="") as fh:
            cols = ["variant", "n_runs", "mae_mean", "mae_std", "rmse_mean", "rmse_std",
                    "wape_mean", "wape_std"]
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)


class Workspace:
    """Graphs and scaled splits for one scenario, shared by every run."""

    def __init__(self, scenario, cfg):
        self.scenario = scenario
        self.cfg = cfg
        g = cfg.graph
        self.graphs, self.tfidf = build_view_graphs(scenario.grid, scenario.poi_counts,
                                                    scenario.transport, g.theta, g.kappa, g.gamma)
        s = cfg.split
        self.data = prepare_dataset(scenario, cfg.model.window, (s.train, s.val, s.test))
        self.test_truth = np.stack([w.target for w in self.data.test_windows])
        self.test_times = self.data.test.target_times
        last_train = self.data.train_windows[-1].target_time
        self.train_end = last_train + 1


def run_variant(ws, variant, seed):
    """Fit (if learned) and score one variant on the test split."""
    spec = VARIANTS[variant]
    run = VariantRun(variant, seed)
    test_windows = ws.data.test_windows
    if variant == "ha":
        ha = HistoricalAverage(ws.scenario.series[:ws.train_end],
                               ws.scenario.contexts[:ws.train_end])
        run.predictions = np.stack([ha.predict(w.contexts[-1]) for w in test_windows])
    elif variant == "persistence":
        run.predictions = np.stack([w.inputs[-1] for w in test_windows])
    else:
        views, fusion = spec
        model = build_variant(ws.cfg.model, ws.graphs, ws.tfidf, views, fusion, seed)
        run.report = train(model, ws.data.train, ws.data.val, ws.cfg.train, ws.cfg.optim,
                           seed=seed, scaler=ws.data.scaler)
        pred, q, w = predict_batch(model, ws.data.test)
        run.scaled = (pred, q)
        run.predictions = ws.data.scaler.unscale(pred)
        run.weights = w
        run.views = tuple(model.views)
    run.result = evaluate(run.predictions, ws.test_truth)
    return run


def _task(args):
    ws, variant, seed = args
    try:
        return run_variant(ws, variant, seed)
    except Exception as exc:  # recorded, not fatal for the other variants
        log.error("variant %s seed %s failed: %s", variant, seed, exc)
        return VariantRun(variant, seed, error="".join(traceback.format_exception_only(type(exc), exc)).strip())


def run_comparison(scenario, variants, seeds, cfg, jobs=1, workspace=None):
    """Every variant for every seed, rows in declaration order."""
    variants = check_variants(variants)
    ws = workspace or Workspace(scenario, cfg)
    tasks = [(ws, v, s) for v in variants for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_task, tasks))
    else:
        runs = []
        for t in tasks:
            runs.append(_task(t))
            r = runs[-1]
            if r.result is not None:
                log.info("%-15s seed %d  MAE %.3f  RMSE %.3f  WAPE %.2f%%", r.variant, r.seed,
                         r.result.mae, r.result.rmse, r.result.wape)
    return Comparison(runs, ws.test_times, ws.test_truth)
