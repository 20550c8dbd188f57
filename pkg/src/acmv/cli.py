"""Command-line entry point: ``acmv <subcommand> ...``.

Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.
Every command writes ``manifest.json`` next to its outputs with the resolved
config, seeds, input and output hashes and timestamps.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys

import numpy as np

from acmv.attention import export_attention_csv, export_attention_geojson
from acmv.compare import VARIANTS, Workspace, check_variants, run_comparison
from acmv.config import config_from_dict, dump_config, load_config
from acmv.data import load_scenario, save_scenario
from acmv.errors import AcmvError, ConfigError, NumericError, ShapeError, ValidationError
from acmv.graphs import build_view_graphs, export_graphs_csv
from acmv.grid import stack_windows
from acmv.metrics import evaluate
from acmv.model import build_variant, load_model, predict_batch, save_model, train
from acmv.nn.checkpoint import load_checkpoint
from acmv.plotting import plot_attention_maps, plot_comparison, plot_training_curves
from acmv.synth import generate_city

log = logging.getLogger("acmv")

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3

CHECKPOINT_FILE = "checkpoint.bin"
EPOCHS_FILE = "epochs.csv"
MANIFEST_FILE = "manifest.json"


# -- manifest ----------------------------------------------------------------


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_paths(paths):
    out = {}
    for p in paths:
        if os.path.isdir(p):
            for name in sorted(os.listdir(p)):
                full = os.path.join(p, name)
                if os.path.isfile(full) and name != MANIFEST_FILE:
                    out[full] = file_sha256(full)
        elif os.path.isfile(p):
            out[p] = file_sha256(p)
    return out


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(target, command, args, cfg, inputs, outputs, started, results=None):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config_path": getattr(args, "config", None),
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": getattr(args, "seed", None),
        "inputs": _hash_paths(inputs),
        "outputs": _hash_paths(outputs),
        "started": started,
        "finished": _now(),
    }
    if results is not None:
        manifest["results"] = results
    path = os.path.join(target, MANIFEST_FILE) if os.path.isdir(target) else target
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _resolve_config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = int(args.seed)
    return cfg


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _result_dict(res):
    return {"mae": res.mae, "rmse": res.rmse, "wape": res.wape}


def _parse_ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


# -- subcommands -------------------------------------------------------------


def cmd_synth(args):
    started = _now()
    cfg = _resolve_config(args)
    out = _outdir(args.out)
    scenario = generate_city(cfg.generator, seed=cfg.seed)
    save_scenario(scenario, out)
    g = cfg.graph
    graphs, _ = build_view_graphs(scenario.grid, scenario.poi_counts, scenario.transport,
                                  g.theta, g.kappa, g.gamma)
    export_graphs_csv(graphs, os.path.join(out, "graphs.csv"))
    dump_config(cfg, os.path.join(out, "config.yaml"))
    write_manifest(out, "synth", args, cfg, [], [out], started)
    log.info("scenario with %d regions x %d intervals written to %s",
             scenario.grid.n_nodes, scenario.n_steps, out)
    return EXIT_OK


def cmd_train(args):
    started = _now()
    cfg = _resolve_config(args)
    if args.variant not in VARIANTS or VARIANTS[args.variant] is None:
        learned = [k for k, v in VARIANTS.items() if v is not None]
        raise ConfigError(f"variant {args.variant!r} is not trainable; choose from {', '.join(learned)}")
    scenario = load_scenario(args.scenario)
    ws = Workspace(scenario, cfg)
    out = _outdir(args.out)
    views, fusion = VARIANTS[args.variant]
    model = build_variant(cfg.model, ws.graphs, ws.tfidf, views, fusion, cfg.seed)
    try:
        report = train(model, ws.data.train, ws.data.val, cfg.train, cfg.optim, seed=cfg.seed,
                       scaler=ws.data.scaler)
    except NumericError as exc:
        log.error("training diverged: %s (try a smaller optim.lr or optim.clip_norm)", exc)
        raise
    ckpt = os.path.join(out, CHECKPOINT_FILE)
    save_model(model, ckpt, ws.data.scaler, _checkpoint_extra(cfg, args.variant))
    report.write_csv(os.path.join(out, EPOCHS_FILE))
    plot_training_curves(report.epochs, os.path.join(out, "training.png"))
    pred, _, _ = predict_batch(model, ws.data.test)
    test = evaluate(ws.data.scaler.unscale(pred), ws.test_truth)
    results = {"best_epoch": report.best_epoch, "best_val_mae": report.best_val_mae,
               "epochs_run": len(report.epochs), "wall_time_s": report.wall_time,
               "test": _result_dict(test)}
    write_manifest(out, "train", args, cfg, [args.scenario], [out], started, results)
    log.info("best epoch %s, val MAE %.3f, test MAE %.3f", report.best_epoch,
             report.best_val_mae or float("nan"), test.mae)
    return EXIT_OK


def _checkpoint_extra(cfg, variant):
    return {"variant": variant, "graph": cfg.to_dict()["graph"], "split": cfg.to_dict()["split"],
            "config_digest": cfg.digest()}


def _load_for_checkpoint(checkpoint, scenario_dir):
    """Scenario, workspace and model for a checkpoint, with compatibility checks."""
    _, meta = load_checkpoint(checkpoint)
    cfg = config_from_dict({k: meta[k] for k in ("model", "graph", "split") if k in meta})
    if meta.get("config_digest") and meta["config_digest"] != cfg.digest():
        raise ValidationError("checkpoint config digest does not match its stored settings")
    scenario = load_scenario(scenario_dir)
    if scenario.grid.n_nodes != int(meta["n_nodes"]):
        raise ShapeError(f"checkpoint expects {meta['n_nodes']} regions, scenario "
                         f"{scenario_dir} has {scenario.grid.n_nodes}")
    ws = Workspace(scenario, cfg)
    model, scaler, meta = load_model(checkpoint, ws.graphs, ws.tfidf)
    return scenario, ws, model, scaler, cfg


def _test_batch(ws, scaler, idx=None):
    """Test windows scaled with the checkpoint's scaler (not a refit)."""
    windows = ws.data.test_windows if idx is None else [ws.data.test_windows[i] for i in idx]
    b = stack_windows(windows)
    return type(b)(scaler.scale(b.inputs), scaler.scale(b.targets), b.contexts, b.target_times)


def cmd_evaluate(args):
    started = _now()
    scenario, ws, model, scaler, cfg = _load_for_checkpoint(args.checkpoint, args.scenario)
    pred, _, _ = predict_batch(model, _test_batch(ws, scaler))
    pred = scaler.unscale(pred)
    truth = ws.test_truth
    res = evaluate(pred, truth)
    err = np.abs(pred - truth)
    mae_n = err.mean(axis=0)
    rmse_n = np.sqrt((err ** 2).mean(axis=0))
    mass = np.abs(truth).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        wape_n = np.where(mass > 0, 100.0 * err.sum(axis=0) / mass, np.nan)
    out_path = args.out
    if os.path.dirname(out_path):
        _outdir(os.path.dirname(out_path))
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "n", "mae", "rmse", "wape"])
        writer.writerow(["all", "", repr(res.mae), repr(res.rmse), repr(res.wape)])
        for n in range(scenario.grid.n_nodes):
            writer.writerow(["region", n, repr(float(mae_n[n])), repr(float(rmse_n[n])),
                             repr(float(wape_n[n]))])
    manifest = os.path.splitext(out_path)[0] + ".manifest.json"
    write_manifest(manifest, "evaluate", args, cfg, [args.checkpoint, args.scenario], [out_path],
                   started, {"test": _result_dict(res)})
    log.info("test MAE %.3f  RMSE %.3f  WAPE %.2f%%", res.mae, res.rmse, res.wape)
    return EXIT_OK


def cmd_compare(args):
    started = _now()
    cfg = _resolve_config(args)
    variants = check_variants([v.strip() for v in args.variants.split(",") if v.strip()])
    seeds = _parse_ints(args.seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")
    scenario = load_scenario(args.scenario)
    out = _outdir(args.out)
    comp = run_comparison(scenario, variants, seeds, cfg, jobs=args.jobs)
    runs_csv = os.path.join(out, "runs.csv")
    agg_csv = os.path.join(out, "aggregate.csv")
    comp.write_csv(runs_csv, agg_csv)
    rows = comp.aggregate()
    plot_comparison(rows, os.path.join(out, "comparison.png"))
    failures = [{"variant": r.variant, "seed": r.seed, "error": r.error}
                for r in comp.runs if r.error]
    write_manifest(out, "compare", args, cfg, [args.scenario], [out], started,
                   {"aggregate": rows, "failures": failures})
    for row in rows:
        log.info("%-15s MAE %.3f +- %.3f", row["variant"], row["mae_mean"], row["mae_std"])
    if not rows:
        log.error("every variant failed")
        return EXIT_NUMERIC if any("NumericError" in f["error"] for f in failures) else EXIT_DATA
    return EXIT_OK


def cmd_export_attention(args):
    started = _now()
    scenario, ws, model, scaler, cfg = _load_for_checkpoint(args.checkpoint, args.scenario)
    times = np.asarray(ws.test_times)
    start = int(args.start) if args.start is not None else int(times[0])
    end = int(args.end) if args.end is not None else int(times[-1])
    if start > end or start < times[0] or end > times[-1]:
        raise ValidationError(f"time range [{start}, {end}] is outside the test split "
                              f"[{int(times[0])}, {int(times[-1])}]")
    idx = np.flatnonzero((times >= start) & (times <= end))
    batch = _test_batch(ws, scaler, idx)
    _, _, w = predict_batch(model, batch)
    out = _outdir(args.out)
    views = tuple(model.views)
    export_attention_csv(os.path.join(out, "attention.csv"), batch.target_times, w, views)
    export_attention_geojson(os.path.join(out, "attention.geojson"), scenario.grid,
                             batch.target_times, w, views)
    plot_attention_maps(scenario.grid, w, views, os.path.join(out, "attention.png"))
    write_manifest(out, "export-attention", args, cfg, [args.checkpoint, args.scenario], [out],
                   started, {"intervals": len(idx), "start": start, "end": end})
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="acmv", description="Multi-view graph convolution "
                                "population forecaster on a synthetic grid city.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML run config (defaults apply to missing keys)")
        if seed:
            sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("synth", help="generate a scenario bundle")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one model variant on a scenario")
    sp.add_argument("scenario", help="scenario directory")
    sp.add_argument("--variant", default="acmv-gcns", help="learned variant (default acmv-gcns)")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="test-split metrics for a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("scenario")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="baselines and ablations over several seeds")
    sp.add_argument("scenario")
    sp.add_argument("--variants", default=",".join(VARIANTS),
                    help=f"comma-separated subset of: {', '.join(VARIANTS)}")
    sp.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated training seeds")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("export-attention", help="per-region attention weights on the test split")
    sp.add_argument("checkpoint")
    sp.add_argument("scenario")
    sp.add_argument("--start", type=int, help="first target interval (default: test start)")
    sp.add_argument("--end", type=int, help="last target interval, inclusive")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_attention)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_DATA if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except AcmvError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s: %s", exc.filename or "I/O error", exc.strerror or exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
