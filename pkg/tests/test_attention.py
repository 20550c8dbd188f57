import csv
import json

import numpy as np
import pytest

from acmv.attention import (AttentionHead, ContextEmbedding, ContextRecord, attention_weights,
                            average_fuse, check_simplex, embed_context, export_attention_csv,
                            export_attention_geojson, fuse)
from acmv.context import context_codes
from acmv.errors import BoundsError, InvariantError, ShapeError
from acmv.grid import GridSpec
from acmv.nn import tensor as T
from acmv.nn.gradcheck import grad_check
from acmv.nn.tensor import Param


def _emb(seed=0):
    return ContextEmbedding(np.random.default_rng(seed))


def _head(n_regions=4, n_cat=3, seed=0, emb_dim=14):
    profiles = np.random.default_rng(seed).random((n_regions, n_cat))
    return AttentionHead(3, emb_dim, profiles, np.random.default_rng(seed))


def test_embedding_examples():
    emb = _emb()
    assert emb.dim == 14
    for p in emb.parameters():
        p.value[...] = 0.0
    np.testing.assert_array_equal(embed_context(emb, ContextRecord(4, "rainy", True)).value, 0.0)
    emb.hour_table.value[...] = np.eye(24, 8)
    e = embed_context(emb, ContextRecord(5, "sunny", False)).value
    np.testing.assert_array_equal(e[:8], np.eye(24, 8)[5])
    emb = _emb(1)
    rec = ContextRecord(17, "cloudy", False)
    assert embed_context(emb, rec).value.tobytes() == embed_context(emb, rec).value.tobytes()


def test_embedding_order_and_bounds():
    emb = _emb(2)
    e = embed_context(emb, ContextRecord(3, "rainy", True)).value
    np.testing.assert_array_equal(e, np.concatenate([emb.hour_table.value[3], emb.weather_table.value[2],
                                                     emb.holiday_table.value[1]]))
    with pytest.raises(BoundsError):
        ContextRecord(24, "sunny", False)
    with pytest.raises(BoundsError):
        ContextRecord(0, "snowy", False)
    np.testing.assert_array_equal(context_codes([ContextRecord(1, "cloudy", True)]), [[1, 1, 1]])


def test_weights_examples():
    head = _head()
    q = np.random.default_rng(0).normal(size=(4, 3))
    e = np.random.default_rng(1).normal(size=14)
    head.fc.W.value[...] = 0.0
    np.testing.assert_allclose(attention_weights(head, q, e).value, 1 / 3, atol=1e-15)
    head.fc.b.value[...] = [50.0, 0.0, 0.0]
    w = attention_weights(head, q, e).value
    np.testing.assert_allclose(w[:, 0], 1.0, atol=1e-20 + 1e-21)
    assert (w[:, 1:] < 1e-21).all()


def test_identical_regions_identical_rows():
    profiles = np.random.default_rng(3).random((3, 4))
    profiles[2] = profiles[0]
    head = AttentionHead(3, 14, profiles, np.random.default_rng(3))
    q = np.random.default_rng(4).normal(size=(3, 3))
    q[2] = q[0]
    w = attention_weights(head, q, np.ones(14)).value
    assert w[0].tobytes() == w[2].tobytes()
    assert not np.array_equal(w[0], w[1])


def test_weights_shape_errors():
    head = _head()
    with pytest.raises(ShapeError):
        attention_weights(head, np.zeros((5, 3)), np.zeros(14))
    with pytest.raises(ShapeError):
        attention_weights(head, np.zeros((4, 2)), np.zeros(14))


def test_simplex_on_random_inputs():
    head = _head(n_regions=6, seed=5)
    rng = np.random.default_rng(5)
    for p in head.parameters():
        p.value[...] = rng.normal(scale=4.0, size=p.value.shape)
    w = attention_weights(head, rng.normal(scale=10, size=(50, 6, 3)), rng.normal(size=(50, 14))).value
    assert (w >= 0).all()
    assert np.abs(w.sum(-1) - 1).max() < 1e-9


def test_fuse_examples():
    q = np.array([[3.0, 6.0, 9.0]])
    assert fuse(q, np.full((1, 3), 1 / 3)).value[0] == pytest.approx(6.0, abs=1e-14)
    assert average_fuse(q).value[0] == pytest.approx(6.0, abs=1e-14)
    assert fuse(q, np.array([[1.0, 0.0, 0.0]])).value[0] == 3.0
    same = np.full((2, 3), 7.25)
    w = np.array([[0.2, 0.3, 0.5], [0.9, 0.05, 0.05]])
    np.testing.assert_allclose(fuse(same, w).value, 7.25, atol=1e-14)
    np.testing.assert_array_equal(average_fuse(same).value, 7.25)


def test_average_fuse_matches_uniform_fuse():
    q = np.random.default_rng(6).normal(size=(10, 3))
    np.testing.assert_allclose(average_fuse(q).value, fuse(q, np.full((10, 3), 1 / 3)).value, atol=1e-14)


def test_fuse_errors_and_bracketing():
    with pytest.raises(InvariantError):
        fuse(np.ones((1, 3)), np.array([[0.5, 0.5, 0.5]]))
    with pytest.raises(InvariantError):
        check_simplex(np.array([[1.1, -0.1, 0.0]]))
    with pytest.raises(ShapeError):
        fuse(np.ones((2, 3)), np.full((1, 3), 1 / 3))
    rng = np.random.default_rng(7)
    q = rng.normal(size=(200, 3))
    w = rng.dirichlet(np.ones(3), size=200)
    out = fuse(q, w).value
    assert (out >= q.min(1)).all() and (out <= q.max(1)).all()


def test_holiday_sensitivity_constructive():
    emb = _emb(8)
    for p in emb.parameters():
        p.value[...] = 0.0
    emb.holiday_table.value[1, 0] = 1.0
    head = _head(n_regions=2, seed=8)
    head.fc.W.value[...] = 0.0
    head.fc.b.value[...] = 0.0
    # first holiday embedding dimension sits after q (3) + hour (8) + weather (4)
    head.fc.W.value[3 + 8 + 4, 2] = 3.0
    q = np.ones((2, 3))
    work = attention_weights(head, q, embed_context(emb, ContextRecord(8, "sunny", False))).value
    rest = attention_weights(head, q, embed_context(emb, ContextRecord(8, "sunny", True))).value
    np.testing.assert_allclose(work, 1 / 3, atol=1e-15)
    assert rest[0, 2] > work[0, 2] + 0.5


def test_gradient_check_embed_attend_fuse():
    for trial in range(20):
        rng = np.random.default_rng(trial)
        emb = _emb(trial)
        head = _head(seed=trial)
        q = Param(rng.normal(size=(4, 3)), "q")
        codes = np.array([rng.integers(24), rng.integers(3), rng.integers(2)])
        W = rng.normal(size=4)

        def f():
            e = emb.embed_codes(codes)
            return T.tsum(fuse(q, attention_weights(head, q, e)) * W)

        assert grad_check(f, emb.parameters() + head.parameters() + [q]) < 1e-4


def test_exports(tmp_path):
    grid = GridSpec(2, 3, 100.0)
    w = np.random.default_rng(9).dirichlet(np.ones(3), size=(4, 6))
    times = [10, 11, 12, 13]
    export_attention_csv(tmp_path / "a.csv", times, w)
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24
    assert list(rows[0]) == ["t", "n", "w_dist", "w_poi", "w_transport"]
    assert float(rows[7]["w_poi"]) == w[1, 1, 1]
    export_attention_geojson(tmp_path / "a.geojson", grid, times, w)
    doc = json.loads((tmp_path / "a.geojson").read_text())
    assert len(doc["features"]) == 24
    ring = doc["features"][0]["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1] and len(ring) == 5
    xs = [p[0] for p in ring]
    assert max(xs) - min(xs) == pytest.approx(100.0)


def test_fuse_bracketing_is_exact_under_rounding():
    rng = np.random.default_rng(10)
    q = rng.normal(size=(3000, 3)) * 100
    q[:1000] = q[:1000, :1]
    w = T.softmax(T.Tensor(rng.normal(scale=3, size=(3000, 3))), axis=-1).value
    out = fuse(q, w).value
    assert (out >= q.min(1)).all() and (out <= q.max(1)).all()
    np.testing.assert_array_equal(out[:1000], q[:1000, 0])
