from __future__ import annotations

import math

import numpy as np
import pytest

from steplearn.explain import (SchemaError, shapley_attribute, summarize_attributions,
                               write_summary_csv)
from steplearn.mlp import MlpModel


def _affine(w, b=0.5):
    w = np.asarray(w, dtype=float)
    return lambda X: np.asarray(X) @ w + b


def _relu_net(seed=0, d=3, width=6):
    rng = np.random.default_rng(seed)
    return MlpModel.identity_normalised([rng.normal(size=(width, d)), rng.normal(size=(1, width))],
                                        [rng.normal(size=width), rng.normal(size=1)])


def test_affine_closed_form_under_enumeration():
    rng = np.random.default_rng(0)
    w = np.array([1.5, -2.0, 0.25, 3.0])
    B = rng.normal(size=(40, 4))
    E = rng.normal(size=(5, 4))
    rep = shapley_attribute(_affine(w), B, E, exact=True, feature_names=list("abcd"))
    expected = w * (E - B.mean(axis=0))
    assert np.max(np.abs(rep.phi - expected)) <= 1e-8
    assert np.max(np.abs(rep.efficiency_residual)) <= 1e-10


def test_constant_model_gets_zero():
    rng = np.random.default_rng(1)
    rep = shapley_attribute(lambda X: np.full(len(X), 7.0), rng.normal(size=(20, 3)),
                            rng.normal(size=(4, 3)), permutations=50)
    assert np.all(rep.phi == 0.0)


def test_monte_carlo_matches_enumeration_on_relu_net():
    rng = np.random.default_rng(2)
    model = _relu_net(3)
    B = rng.normal(size=(50, 3))
    E = rng.normal(size=(6, 3))
    exact = shapley_attribute(model, B, E, exact=True)
    mc = shapley_attribute(model, B, E, permutations=2000, seed=5)
    assert np.all(np.abs(mc.phi - exact.phi) <= 3 * mc.se + 1e-12)


def test_efficiency_on_hundred_points():
    rng = np.random.default_rng(3)
    model = _relu_net(4, d=5, width=16)
    B = rng.normal(size=(300, 5))
    E = rng.normal(size=(100, 5))
    rep = shapley_attribute(model, B, E, permutations=200, seed=0)
    assert rep.efficiency_ok().all()
    # every sampled chain telescopes, so against the sampled background it is exact
    assert np.allclose(rep.phi.sum(axis=1), rep.prediction - rep.sampled_base, atol=1e-9)


def test_symmetry_for_duplicated_features():
    rng = np.random.default_rng(4)
    B = rng.normal(size=(60, 2))
    B = np.column_stack([B[:, 0], B[:, 0], B[:, 1]])
    E = rng.normal(size=(5, 2))
    E = np.column_stack([E[:, 0], E[:, 0], E[:, 1]])
    f = lambda X: np.maximum(X[:, 0] + X[:, 1] - 0.5 * X[:, 2], 0.0)
    exact = shapley_attribute(f, B, E, exact=True)
    assert np.allclose(exact.phi[:, 0], exact.phi[:, 1], atol=1e-12)
    mc = shapley_attribute(f, B, E, permutations=1000, seed=1)
    tol = 3 * np.hypot(mc.se[:, 0], mc.se[:, 1]) + 1e-12
    assert np.all(np.abs(mc.phi[:, 0] - mc.phi[:, 1]) <= tol)


def test_null_player_exactly_zero():
    rng = np.random.default_rng(5)
    w = np.array([[1.0, 0.0, -1.0], [0.5, 0.0, 2.0]])
    model = MlpModel.identity_normalised([w, np.ones((1, 2))], [np.zeros(2), np.zeros(1)])
    rep = shapley_attribute(model, rng.normal(size=(30, 3)), rng.normal(size=(4, 3)), exact=True)
    assert np.all(rep.phi[:, 1] == 0.0)


def test_deterministic_given_seed():
    rng = np.random.default_rng(6)
    model = _relu_net(7)
    B, E = rng.normal(size=(30, 3)), rng.normal(size=(3, 3))
    a = shapley_attribute(model, B, E, permutations=40, seed=9)
    b = shapley_attribute(model, B, E, permutations=40, seed=9)
    assert np.array_equal(a.phi, b.phi)


def test_schema_checks():
    model = _relu_net(0)
    with pytest.raises(SchemaError):
        shapley_attribute(model, np.zeros((3, 2)), np.zeros((1, 2)),
                          feature_names=["x0", "x1"])
    with pytest.raises(ValueError):
        shapley_attribute(model, np.zeros((3, 3)), np.zeros((1, 3)), permutations=0)
    with pytest.raises(SchemaError):
        shapley_attribute(_affine([1, 1]), np.zeros((3, 2)), np.zeros((1, 3)))


def test_named_columns_are_reordered():
    rng = np.random.default_rng(8)
    model = _relu_net(1)
    B, E = rng.normal(size=(20, 3)), rng.normal(size=(2, 3))
    cols = ["junk", "x2", "x0", "x1"]
    perm = lambda M: np.column_stack([np.zeros(len(M)), M[:, 2], M[:, 0], M[:, 1]])
    a = shapley_attribute(model, B, E, exact=True)
    b = shapley_attribute(model, perm(B), perm(E), exact=True, feature_names=cols)
    assert np.allclose(a.phi, b.phi, atol=1e-12)


def test_summary_shares(tmp_path):
    rng = np.random.default_rng(9)
    B = np.column_stack([rng.normal(size=50), np.zeros(50), np.zeros(50)])
    E = np.column_stack([rng.normal(size=10), np.zeros(10), np.zeros(10)])
    rep = shapley_attribute(_affine([2.0, 1.0, -1.0]), B, E, exact=True)
    rows = summarize_attributions(rep, top_k=1)
    assert rows[0]["feature"] == "x0" and rows[0]["share_pct"] == pytest.approx(100.0)
    E2 = rng.normal(size=(10, 3))
    rep2 = shapley_attribute(_affine([2.0, 1.0, -1.0]), rng.normal(size=(50, 3)), E2, exact=True)
    rows2 = summarize_attributions(rep2, top_k=10)
    assert len(rows2) == 3
    assert math.isclose(sum(r["share_pct"] for r in rows2), 100.0)
    assert sorted(r["rank"] for r in rows2) == [1, 2, 3]
    write_summary_csv(rows2, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("rank,feature,mean_shap")
    rep2.write_csv(tmp_path / "p.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 11


def test_direction_follows_value_correlation():
    rng = np.random.default_rng(10)
    w = np.array([2.0, -1.0, 0.0])
    B, E = rng.normal(size=(80, 3)), rng.normal(size=(40, 3))
    rep = shapley_attribute(_affine(w), B, E, exact=True)
    corr = rep.value_correlation
    assert corr[0] == pytest.approx(1.0) and corr[1] == pytest.approx(-1.0) and corr[2] == 0.0
    dirs = {r["feature"]: r["direction"] for r in summarize_attributions(rep)}
    assert dirs == {"x0": "+", "x1": "-", "x2": "0"}
