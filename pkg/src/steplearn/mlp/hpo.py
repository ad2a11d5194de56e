"""Budgeted random hyperparameter search.

Trials draw the learning rate, Huber delta and L2 weight log-uniformly and
the depth / width uniformly from fixed grids. The winner is the trial with
the lowest validation loss; it is then scored on a held-out test split that
no trial ever saw.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .model import MlpModel, forward
from .train import DivergenceError, TrainConfig, huber_loss, stratified_split, train_arrays

log = logging.getLogger(__name__)

LR_RANGE = (1e-5, 1e-2)
DELTA_RANGE = (1e-4, 10.0)
L2_RANGE = (1e-6, 1e-2)
DEPTHS = (2, 3)
WIDTHS = tuple(range(32, 513, 32))


class SearchFailedError(RuntimeError):
    """Every trial diverged."""

    def __init__(self, diagnostics: list[str]) -> None:
        super().__init__("all hyperparameter trials diverged:\n  " + "\n  ".join(diagnostics))
        self.diagnostics = diagnostics


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_trial(rng: np.random.Generator, base: TrainConfig) -> TrainConfig:
    """One random configuration drawn from the search ranges."""
    lr = _log_uniform(rng, *LR_RANGE)
    delta = _log_uniform(rng, *DELTA_RANGE)
    l2 = _log_uniform(rng, *L2_RANGE)
    depth = int(rng.choice(DEPTHS))
    width = int(rng.choice(WIDTHS))
    return replace(base, learning_rate=lr, huber_delta=delta, l2=l2, hidden=(width,) * depth)


@dataclass
class Trial:
    index: int
    config: TrainConfig
    val_loss: float = np.inf
    epochs: int = 0
    error: str = ""


@dataclass
class SearchResult:
    best_config: TrainConfig
    model: MlpModel
    val_loss: float
    test_loss: float
    test_r2: float
    trials: list[Trial]

    def leaderboard(self) -> list[dict]:
        """Trials sorted by validation loss (diverged trials last)."""
        rows = []
        for t in sorted(self.trials, key=lambda t: (not np.isfinite(t.val_loss), t.val_loss,
                                                    t.index)):
            c = t.config
            rows.append({"trial": t.index, "learning_rate": c.learning_rate,
                         "huber_delta": c.huber_delta, "l2": c.l2, "depth": len(c.hidden),
                         "width": c.hidden[0], "val_loss": t.val_loss, "epochs": t.epochs,
                         "error": t.error})
        return rows


def _run_trial(args):
    X, y, names, cfg, target, tr, va, index = args
    try:
        res = train_arrays(X, y, names, cfg, target, tr, va)
    except DivergenceError as exc:
        return Trial(index, cfg, error=str(exc)), None
    return Trial(index, cfg, res.val_loss, len(res.history)), res.model


def split_three(strat: np.ndarray, val_fraction: float, test_fraction: float, seed: int):
    """Stratified test / validation / training indices (test carved first)."""
    rest, test = stratified_split(strat, test_fraction, seed)
    tr, va = stratified_split(strat[rest], val_fraction / (1.0 - test_fraction), seed + 1)
    return rest[tr], rest[va], test


def hpo_search_arrays(X, y, names, target: str = "cost", budget: int = 40, seed: int = 0,
                      base: TrainConfig | None = None, test_fraction: float = 0.1,
                      strat=None, jobs: int = 1) -> SearchResult:
    if budget < 1:
        raise ValueError("budget must be at least 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    base = base or TrainConfig.for_target(target)
    strat = np.zeros(len(y)) if strat is None else np.asarray(strat)
    tr, va, te = split_three(strat, base.val_fraction, test_fraction, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4850]))
    configs = [replace(sample_trial(rng, base), seed=seed + 1000 + i) for i in range(budget)]
    tasks = [(X, y, list(names), c, target, tr, va, i) for i, c in enumerate(configs)]
    if jobs > 1 and budget > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_trial, tasks))
    else:
        out = [_run_trial(t) for t in tasks]
    trials = [t for t, _ in out]
    ok = [(t, m) for t, m in out if m is not None]
    if not ok:
        raise SearchFailedError([f"trial {t.index}: {t.error}" for t in trials])
    best, model = min(ok, key=lambda tm: (tm[0].val_loss, tm[0].index))
    pred = forward(model, model.select(X=X[te], names=list(names)))
    t_true = model.normalise_y(y[te])
    test_loss = float(np.mean(huber_loss(model.normalise_y(pred) - t_true,
                                         best.config.huber_delta)))
    ss = float(np.sum((y[te] - y[te].mean()) ** 2))
    test_r2 = 1.0 - float(np.sum((y[te] - pred) ** 2)) / ss if ss > 0 else 1.0
    model.metadata.update({"hpo_trial": best.index, "hpo_budget": budget,
                           "test_loss": test_loss, "test_r2": test_r2, "n_test": int(len(te))})
    log.info("hpo %s: trial %d wins (val %.4g, test %.4g)", target, best.index, best.val_loss,
             test_loss)
    return SearchResult(best.config, model, best.val_loss, test_loss, test_r2, trials)


def hpo_search(dataset, target: str = "cost", budget: int = 40, seed: int = 0,
               base: TrainConfig | None = None, test_fraction: float = 0.1,
               jobs: int = 1) -> SearchResult:
    """Random search on a sampler dataset; flagged rows follow `base.include_infeasible`."""
    base = base or TrainConfig.for_target(target)
    data = dataset.training_rows(base.include_infeasible)
    res = hpo_search_arrays(data.X, data.target(target), data.feature_names, target, budget,
                            seed, base, test_fraction, strat=data.shed, jobs=jobs)
    res.model.metadata["include_infeasible"] = base.include_infeasible
    res.model.metadata["dataset"] = dict(data.meta)
    return res
