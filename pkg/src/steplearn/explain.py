"""Shapley feature attributions for trained surrogates.

Two estimators share one report type:

* permutation sampling: each of P random feature orderings is paired with a
  background row (cycling through a per-point background subsample), and a
  feature's attribution is its average marginal contribution when it is
  switched from the background value to the evaluated value;
* exact enumeration over all 2^d coalitions with the full background set,
  for small d (used as an oracle).

Absent features take background values, so for every sampled ordering the
contributions add up to f(x) - f(background row).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mlp.model import MlpModel, forward

EXACT_MAX_FEATURES = 16


class SchemaError(ValueError):
    """Sample columns do not match the model's features."""


@dataclass
class AttributionReport:
    feature_names: list[str]
    phi: np.ndarray  # (points, features), target units
    se: np.ndarray  # Monte-Carlo standard errors of phi (0 under enumeration)
    prediction: np.ndarray  # f(x) per point
    base_value: float  # mean of f over the full background set
    sampled_base: np.ndarray  # mean of f over the background rows each point used
    efficiency_se: np.ndarray  # standard error of the efficiency residual per point
    method: str
    permutations: int
    n_background: int
    seed: int
    background: dict = field(default_factory=dict)
    values: np.ndarray | None = None  # evaluation feature values, aligned with phi

    @property
    def value_correlation(self) -> np.ndarray:
        """Per-feature Pearson correlation of feature value with its attribution.

        Positive means higher values push the prediction up. Zero when either
        side is constant or the values are unknown.
        """
        d = self.phi.shape[1]
        if self.values is None or len(self.phi) < 2:
            return np.zeros(d)
        x = self.values - self.values.mean(axis=0)
        p = self.phi - self.phi.mean(axis=0)
        den = np.sqrt((x * x).sum(axis=0) * (p * p).sum(axis=0))
        num = (x * p).sum(axis=0)
        out = np.zeros(d)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out

    @property
    def mean_shap(self) -> np.ndarray:
        return self.phi.mean(axis=0)

    @property
    def mean_abs_shap(self) -> np.ndarray:
        return np.abs(self.phi).mean(axis=0)

    @property
    def ranks(self) -> np.ndarray:
        """1-based rank per feature by mean |SHAP| (ties broken by column order)."""
        order = np.lexsort((np.arange(len(self.feature_names)), -self.mean_abs_shap))
        r = np.empty(len(order), dtype=int)
        r[order] = np.arange(1, len(order) + 1)
        return r

    @property
    def efficiency_residual(self) -> np.ndarray:
        """sum(phi) - (f(x) - mean background f) per point."""
        return self.phi.sum(axis=1) - (self.prediction - self.base_value)

    def efficiency_ok(self, sigmas: float = 3.0, atol: float = 1e-9) -> np.ndarray:
        scale = atol * (1.0 + np.abs(self.prediction))
        return np.abs(self.efficiency_residual) <= sigmas * self.efficiency_se + scale

    def write_csv(self, path) -> None:
        """Per-point attributions plus the efficiency audit columns."""
        ok = self.efficiency_ok()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["point", "prediction", *self.feature_names, "efficiency_residual",
                        "efficiency_se", "efficiency_ok"])
            res = self.efficiency_residual
            for i in range(len(self.prediction)):
                w.writerow([i, repr(float(self.prediction[i])),
                            *[repr(float(v)) for v in self.phi[i]], repr(float(res[i])),
                            repr(float(self.efficiency_se[i])), int(ok[i])])


def _as_function(model, feature_names) -> tuple[Callable, list[str]]:
    if isinstance(model, MlpModel):
        names = list(model.feature_names)
        if feature_names is not None:
            missing = [n for n in names if n not in feature_names]
            if missing:
                raise SchemaError(f"samples lack model features {missing}")
            pos = [list(feature_names).index(n) for n in names]
            return (lambda X: np.atleast_1d(forward(model, np.asarray(X)[:, pos]))), names
        return (lambda X: np.atleast_1d(forward(model, X))), names
    if not callable(model):
        raise TypeError("model must be an MlpModel or a callable on row matrices")
    return model, list(feature_names) if feature_names is not None else None


def _permutation_point(f, x, bg, perms: int, rng: np.random.Generator):
    d = len(x)
    order = np.argsort(rng.random((perms, d)), axis=1)
    rows = bg[np.arange(perms) % len(bg)]
    # (perms, d + 1, d) chain: step k has the first k features of the ordering set to x
    chain = np.repeat(rows[:, None, :], d + 1, axis=1)
    for k in range(d):
        idx = order[:, k]
        chain[np.arange(perms), k + 1:, idx] = x[idx][:, None]
    vals = f(chain.reshape(-1, d)).reshape(perms, d + 1)
    contrib = np.empty((perms, d))
    steps = np.diff(vals, axis=1)
    contrib[np.arange(perms)[:, None], order] = steps
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / math.sqrt(perms) if perms > 1 else np.zeros(d)
    fb = vals[:, 0]
    return phi, se, float(vals[0, -1]), fb


def _exact_point(f, x, bg):
    d = len(x)
    masks = np.arange(2 ** d)
    bits = ((masks[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)
    vals = np.empty(len(masks))
    for s, b in enumerate(bits):
        X = bg.copy()
        X[:, b] = x[b]
        vals[s] = float(np.mean(f(X)))
    size = bits.sum(axis=1)
    wt = np.array([math.factorial(k) * math.factorial(d - k - 1) / math.factorial(d)
                   if k < d else 0.0 for k in range(d + 1)])
    phi = np.zeros(d)
    for i in range(d):
        without = masks[~bits[:, i]]
        phi[i] = float(np.sum(wt[size[without]] * (vals[without | (1 << i)] - vals[without])))
    return phi, vals[-1], vals[0]


def shapley_attribute(model, background, evaluation, permutations: int = 200, seed: int = 0,
                      n_background: int = 100, exact: bool = False,
                      feature_names=None) -> AttributionReport:
    """Attribute each evaluation point's prediction to the input features.

    `model` is an :class:`MlpModel` (columns are picked by name when
    `feature_names` describes the sample columns) or any callable mapping a
    row matrix to predictions. With `exact` every coalition is enumerated
    against the full background set.
    """
    if permutations < 1:
        raise ValueError("permutations must be at least 1")
    f, names = _as_function(model, feature_names)
    B = np.atleast_2d(np.asarray(background, dtype=float))
    E = np.atleast_2d(np.asarray(evaluation, dtype=float))
    if len(B) == 0 or B.size == 0:
        raise ValueError("background set is empty")
    if isinstance(model, MlpModel) and feature_names is not None:
        pos = [list(feature_names).index(n) for n in names]
        B, E = B[:, pos], E[:, pos]
        f, _ = _as_function(model, None)
    if B.shape[1] != E.shape[1]:
        raise SchemaError("background and evaluation sets have different widths")
    d = B.shape[1]
    if names is None:
        names = [f"x{i}" for i in range(d)]
    if len(names) != d:
        raise SchemaError(f"{len(names)} feature names for {d} columns")
    if exact and d > EXACT_MAX_FEATURES:
        raise ValueError(f"exact enumeration is limited to {EXACT_MAX_FEATURES} features")
    fB = f(B)
    base = float(np.mean(fB))
    n = len(E)
    phi = np.zeros((n, d))
    se = np.zeros((n, d))
    pred = np.zeros(n)
    sbase = np.zeros(n)
    eff_se = np.zeros(n)
    for i in range(n):
        if exact:
            phi[i], pred[i], sbase[i] = _exact_point(f, E[i], B)
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        k = min(n_background, len(B))
        sub = B[rng.choice(len(B), size=k, replace=False)]
        phi[i], se[i], pred[i], fb = _permutation_point(f, E[i], sub, permutations, rng)
        sbase[i] = float(np.mean(fb))
        # residual = base - mean of sampled f(b); its spread comes from the background draw
        eff_se[i] = float(np.std(fB, ddof=1) / math.sqrt(min(permutations, k))) if len(B) > 1 \
            else 0.0
    desc = {"rows": int(len(B)), "mean_prediction": base}
    return AttributionReport(names, phi, se, pred, base, sbase, eff_se,
                             "exact" if exact else "permutation",
                             0 if exact else permutations, len(B) if exact else min(n_background, len(B)),
                             seed, desc, E.copy())


def summarize_attributions(report: AttributionReport, top_k: int = 10) -> list[dict]:
    """Top features by mean |SHAP| with direction and share of the total.

    The direction is the sign of the value/attribution correlation: the mean
    signed attribution is near zero whenever the evaluation points follow
    the background distribution, so it says little about direction.
    """
    if report.phi.size == 0:
        raise ValueError("empty attribution report")
    mabs = report.mean_abs_shap
    msig = report.mean_shap
    corr = report.value_correlation
    total = float(mabs.sum())
    ranks = report.ranks
    order = np.argsort(ranks)
    rows = []
    for j in order[:top_k]:
        rows.append({"rank": int(ranks[j]), "feature": report.feature_names[j],
                     "mean_shap": float(msig[j]), "mean_abs_shap": float(mabs[j]),
                     "value_corr": float(corr[j]),
                     "direction": "+" if corr[j] > 0 else "-" if corr[j] < 0 else "0",
                     "share_pct": 100.0 * float(mabs[j]) / total if total > 0 else 0.0})
    return rows


def write_summary_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "mean_shap", "mean_abs_shap", "value_corr", "direction",
                    "share_pct"])
        for r in rows:
            w.writerow([r["rank"], r["feature"], repr(r["mean_shap"]), repr(r["mean_abs_shap"]),
                        repr(r["value_corr"]), r["direction"], repr(r["share_pct"])])
