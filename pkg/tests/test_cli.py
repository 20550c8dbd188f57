import csv
import json
import os

import numpy as np
import pytest
import yaml

from acmv.cli import main
from acmv.data import load_scenario

TINY = {
    "generator": {"rows": 3, "cols": 4, "days": 10, "n_hubs": 2, "n_lines": 2},
    "model": {"gcn_features": [2], "gru_hidden": 4, "window": 4, "hour_dim": 2, "weather_dim": 2,
              "holiday_dim": 2},
    "train": {"epochs": 2, "batch_size": 32},
}

pytestmark = pytest.mark.filterwarnings("ignore:power iteration did not converge")


def _config(tmp_path, **overrides):
    cfg = json.loads(json.dumps(TINY))
    for section, values in overrides.items():
        cfg.setdefault(section, {}).update(values)
    path = tmp_path / f"cfg{len(list(tmp_path.glob('cfg*')))}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _config(root)
    scen = str(root / "scen")
    assert main(["synth", "--config", cfg, "--seed", "1", "--out", scen]) == 0
    run = str(root / "run")
    assert main(["train", scen, "--config", cfg, "--seed", "2", "--out", run]) == 0
    return root, cfg, scen, run


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_outputs_and_determinism(bundle, tmp_path):
    root, cfg, scen, _ = bundle
    for name in ("series.csv", "contexts.csv", "poi.csv", "transport.csv", "graphs.csv", "grid.json",
                 "config.yaml", "manifest.json"):
        assert os.path.exists(os.path.join(scen, name)), name
    again = str(tmp_path / "again")
    assert main(["synth", "--config", cfg, "--seed", "1", "--out", again]) == 0
    for name in ("series.csv", "contexts.csv", "poi.csv", "transport.csv", "graphs.csv"):
        with open(os.path.join(scen, name), "rb") as a, open(os.path.join(again, name), "rb") as b:
            assert a.read() == b.read(), name
    assert load_scenario(scen).series.shape == (240, 12)
    manifest = json.load(open(os.path.join(scen, "manifest.json")))
    assert manifest["command"] == "synth" and manifest["outputs"]


def test_train_outputs(bundle):
    _, _, _, run = bundle
    for name in ("checkpoint.bin", "epochs.csv", "training.png", "manifest.json"):
        assert os.path.exists(os.path.join(run, name)), name
    rows = _rows(os.path.join(run, "epochs.csv"))
    assert [int(r["epoch"]) for r in rows] == [0, 1]
    results = json.load(open(os.path.join(run, "manifest.json")))["results"]
    assert results["epochs_run"] == 2 and results["test"]["mae"] > 0


def test_evaluate(bundle, tmp_path):
    _, _, scen, run = bundle
    out = str(tmp_path / "eval" / "metrics.csv")
    assert main(["evaluate", os.path.join(run, "checkpoint.bin"), scen, "--out", out]) == 0
    rows = _rows(out)
    assert rows[0]["scope"] == "all" and len(rows) == 13
    trained = json.load(open(os.path.join(run, "manifest.json")))["results"]["test"]
    assert float(rows[0]["mae"]) == trained["mae"]
    maes = np.array([float(r["mae"]) for r in rows[1:]])
    assert float(rows[0]["mae"]) == pytest.approx(maes.mean(), rel=1e-12)
    assert os.path.exists(str(tmp_path / "eval" / "metrics.manifest.json"))


def test_export_attention(bundle, tmp_path):
    _, _, scen, run = bundle
    out = str(tmp_path / "att")
    ckpt = os.path.join(run, "checkpoint.bin")
    assert main(["export-attention", ckpt, scen, "--out", out]) == 0
    rows = _rows(os.path.join(out, "attention.csv"))
    n_intervals = json.load(open(os.path.join(out, "manifest.json")))["results"]["intervals"]
    assert len(rows) == 12 * n_intervals
    w = np.array([[float(r[k]) for k in ("w_dist", "w_poi", "w_transport")] for r in rows])
    assert (w >= 0).all() and np.abs(w.sum(1) - 1).max() < 1e-9
    geo = json.load(open(os.path.join(out, "attention.geojson")))
    assert len(geo["features"]) == len(rows)
    assert os.path.exists(os.path.join(out, "attention.png"))
    start = int(rows[0]["t"])
    assert main(["export-attention", ckpt, scen, "--start", str(start), "--end", str(start + 1),
                 "--out", str(tmp_path / "att2")]) == 0
    assert len(_rows(str(tmp_path / "att2" / "attention.csv"))) == 24
    assert main(["export-attention", ckpt, scen, "--start", "0", "--out", str(tmp_path / "bad")]) == 2


def test_compare(bundle, tmp_path):
    _, cfg, scen, _ = bundle
    out = str(tmp_path / "cmp")
    assert main(["compare", scen, "--config", cfg, "--variants", "ha,persistence,dist",
                 "--seeds", "0,1", "--out", out]) == 0
    agg = _rows(os.path.join(out, "aggregate.csv"))
    assert [r["variant"] for r in agg] == ["ha", "persistence", "dist"]
    assert float(agg[0]["mae_std"]) == 0.0
    assert len(_rows(os.path.join(out, "runs.csv"))) == 6
    assert os.path.exists(os.path.join(out, "comparison.png"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_codes(bundle, tmp_path):
    root, cfg, scen, run = bundle
    assert main(["--help"]) == 0
    assert main(["bogus"]) == 2
    assert main(["train", str(tmp_path / "missing"), "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert main(["train", scen, "--config", cfg, "--variant", "ha", "--out", str(tmp_path / "x")]) == 2
    assert main(["compare", scen, "--config", cfg, "--variants", "nope", "--out", str(tmp_path / "y")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {K: 0}\n")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "z")]) == 2
    garbage = tmp_path / "garbage.bin"
    garbage.write_bytes(b"not a checkpoint")
    assert main(["evaluate", str(garbage), scen, "--out", str(tmp_path / "e.csv")]) == 2
    diverge = _config(tmp_path, optim={"lr": 1e308, "clip_norm": 1e308})
    assert main(["train", scen, "--config", diverge, "--out", str(tmp_path / "div")]) == 3


def test_train_checkpoint_on_other_grid(bundle, tmp_path):
    _, _, _, run = bundle
    other = _config(tmp_path, generator={"rows": 2, "cols": 4})
    scen2 = str(tmp_path / "scen2")
    assert main(["synth", "--config", other, "--out", scen2]) == 0
    assert main(["evaluate", os.path.join(run, "checkpoint.bin"), scen2,
                 "--out", str(tmp_path / "m.csv")]) == 2
