"""Huber + L2 training with Adam, plateau learning-rate decay and early stopping."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import MlpModel, init_params

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    huber_delta: float = 1.0
    l2: float = 1e-6
    batch_size: int = 64
    max_epochs: int = 5000
    patience: int = 250
    plateau_patience: int = 75
    plateau_factor: float = 0.75
    min_lr: float = 1e-6
    seed: int = 0
    val_fraction: float = 0.2
    hidden: tuple = (64, 64)
    include_infeasible: bool = False  # train on rows flagged infeasible-under-standard
    rel_improvement: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("learning_rate", "huber_delta", "batch_size", "max_epochs", "patience",
                     "plateau_patience", "plateau_factor", "min_lr"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("need at least one hidden layer of positive width")

    @classmethod
    def for_target(cls, target: str, **kw) -> "TrainConfig":
        """Defaults with the per-target batch size (64 for cost, 32 for shed)."""
        kw.setdefault("batch_size", 64 if target == "cost" else 32)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def huber_loss(r, delta: float):
    """r^2/2 inside [-delta, delta], delta (|r| - delta/2) outside."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_grad(r: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(r, -delta, delta)


def loss_and_grad(weights, biases, Z: np.ndarray, t: np.ndarray, delta: float, l2: float):
    """Mean Huber loss over rows plus l2 * sum ||W||^2, with gradients."""
    hs = [Z]
    acts = []
    h = Z
    for w, b in zip(weights[:-1], biases[:-1]):
        a = h @ w.T + b
        acts.append(a)
        h = np.maximum(a, 0.0)
        hs.append(h)
    out = (h @ weights[-1].T + biases[-1])[:, 0]
    r = out - t
    n = len(t)
    loss = float(np.mean(huber_loss(r, delta))) + l2 * sum(float(np.sum(w * w)) for w in weights)
    g = (huber_grad(r, delta) / n)[:, None]
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for m in range(len(weights) - 1, -1, -1):
        gw[m] = g.T @ hs[m] + 2.0 * l2 * weights[m]
        gb[m] = g.sum(axis=0)
        if m > 0:
            g = (g @ weights[m]) * (acts[m - 1] > 0)
    return loss, gw, gb


def data_loss(weights, biases, Z, t, delta: float) -> float:
    h = Z
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
    out = (h @ weights[-1].T + biases[-1])[:, 0]
    return float(np.mean(huber_loss(out - t, delta)))


_TINY = np.finfo(float).tiny
_PARAM_FLOOR = 1e-150


class Adam:
    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        """In-place update."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            # flush subnormals: decaying moments otherwise crawl through slow denormal arithmetic
            m[np.abs(m) < _TINY] = 0.0
            v[v < _TINY] = 0.0
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            # weights decayed below 1e-150 carry no signal; zero them so that products
            # in the backward pass stay out of the subnormal range
            p[np.abs(p) < _PARAM_FLOOR] = 0.0


def improved(value: float, best: float, rel: float) -> bool:
    if not np.isfinite(best):
        return np.isfinite(value)
    return value < best - rel * abs(best)


class PlateauScheduler:
    """Multiply the rate by `factor` after `patience` stagnant epochs, never below `floor`."""

    def __init__(self, lr: float, factor: float = 0.75, patience: int = 75, floor: float = 1e-6,
                 rel: float = 1e-6) -> None:
        self.lr, self.factor, self.patience, self.floor, self.rel = lr, factor, patience, floor, rel
        self.best = np.inf
        self.stale = 0
        self.reductions = 0

    def step(self, val: float) -> float:
        if improved(val, self.best, self.rel):
            self.best = val
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.lr * self.factor, self.floor)
                self.reductions += 1
                self.stale = 0
        return self.lr


def stratified_split(shed: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Train / validation indices with shed-positive rows split proportionally."""
    shed = np.asarray(shed)
    rng = np.random.default_rng(seed)
    n = len(shed)
    pos = np.flatnonzero(shed > 1e-9)
    neg = np.flatnonzero(shed <= 1e-9)
    strata = [s for s in (neg, pos) if len(s)]
    if any(len(s) < 2 for s in strata):
        log.warning("a shed stratum has fewer than 2 rows; falling back to a random split")
        strata = [np.arange(n)]
    val = []
    for s in strata:
        k = int(round(fraction * len(s)))
        val.append(rng.permutation(s)[:k])
    val_idx = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[val_idx] = False
    return np.flatnonzero(mask), val_idx


@dataclass
class TrainResult:
    model: MlpModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    val_loss: float = np.inf

    def write_history(self, path) -> None:
        write_history(self.history, path)


def r2_score(y: np.ndarray, pred: np.ndarray) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    res = float(np.sum((y - pred) ** 2))
    return 1.0 - res / ss if ss > 0 else (1.0 if res == 0 else 0.0)


def train_arrays(X: np.ndarray, y: np.ndarray, names: list[str], config: TrainConfig,
                 target: str = "cost", train_idx=None, val_idx=None,
                 strat: np.ndarray | None = None) -> TrainResult:
    """Fit one single-output network on raw feature matrix `X`.

    Without explicit indices the rows are split with :func:`stratified_split`
    on `strat` (shed values); without `strat` the split is plain random.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two rows to train")
    if train_idx is None or val_idx is None:
        train_idx, val_idx = stratified_split(np.zeros(len(y)) if strat is None else strat,
                                              config.val_fraction, config.seed)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("split left an empty train or validation set")
    Xtr, ytr, Xva, yva = X[train_idx], y[train_idx], X[val_idx], y[val_idx]

    keep = np.ptp(Xtr, axis=0) > 0
    std = Xtr.std(axis=0)
    dropped = {names[j]: float(Xtr[0, j]) for j in np.flatnonzero(~keep)}
    kept_names = [n for n, k in zip(names, keep) if k]
    x_mean, x_scale = Xtr[:, keep].mean(axis=0), std[keep]
    y_mean = float(ytr.mean())
    y_scale = float(ytr.std()) or 1.0
    Ztr = (Xtr[:, keep] - x_mean) / x_scale
    Zva = (Xva[:, keep] - x_mean) / x_scale
    ttr = (ytr - y_mean) / y_scale
    tva = (yva - y_mean) / y_scale

    rng = np.random.default_rng(config.seed)
    ws, bs = init_params(Ztr.shape[1], config.hidden, rng)
    params = ws + bs
    adam = Adam(params)
    sched = PlateauScheduler(config.learning_rate, config.plateau_factor,
                             config.plateau_patience, config.min_lr, config.rel_improvement)
    best = np.inf
    best_params = [p.copy() for p in params]
    best_epoch, stale = 0, 0
    history = []
    n = len(ttr)
    L = len(ws)
    lr = config.learning_rate
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            bi = order[s:s + config.batch_size]
            loss, gw, gb = loss_and_grad(ws, bs, Ztr[bi], ttr[bi], config.huber_delta, config.l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch} (lr={lr:g})")
            adam.step(params, gw + gb, lr)
        tr_loss = data_loss(ws, bs, Ztr, ttr, config.huber_delta)
        va_loss = data_loss(ws, bs, Zva, tva, config.huber_delta)
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise DivergenceError(f"non-finite loss at epoch {epoch} (lr={lr:g})")
        history.append({"epoch": epoch, "train_loss": tr_loss, "val_loss": va_loss, "lr": lr})
        if improved(va_loss, best, config.rel_improvement):
            best, best_epoch, stale = va_loss, epoch, 0
            best_params = [p.copy() for p in params]
        else:
            stale += 1
        lr = sched.step(va_loss)
        if stale >= config.patience:
            break
    ws_best, bs_best = best_params[:L], best_params[L:]
    model = MlpModel(ws_best, bs_best, kept_names, x_mean, x_scale, y_mean, y_scale,
                     dropped=dropped, target=target)
    pred_va = model.denormalise_y(model.forward_normalised(Zva))
    model.metadata = {
        "target": target,
        "train_config": config.to_dict(),
        "best_epoch": best_epoch,
        "epochs_run": len(history),
        "val_loss": best,
        "val_r2": r2_score(yva, pred_va),
        "val_mae": float(np.mean(np.abs(yva - pred_va))),
        "n_train": int(len(train_idx)),
        "n_val": int(len(val_idx)),
        "x_min": [float(v) for v in X[:, keep].min(axis=0)],
        "x_max": [float(v) for v in X[:, keep].max(axis=0)],
    }
    return TrainResult(model, history, best_epoch, best)


def train(dataset, config: TrainConfig, target: str = "cost", train_idx=None,
          val_idx=None) -> TrainResult:
    """Fit the `target` ('cost' or 'shed') model on a sampler dataset."""
    data = dataset.training_rows(config.include_infeasible)
    if len(data) == 0:
        raise ValueError("dataset is empty after filtering flagged rows")
    res = train_arrays(data.X, data.target(target), list(data.feature_names), config, target,
                       train_idx, val_idx, strat=data.shed)
    res.model.metadata["include_infeasible"] = config.include_infeasible
    res.model.metadata["dataset"] = dict(data.meta)
    return res


def write_history(history: list[dict], path) -> None:
    """Per-epoch loss curve as CSV (epoch, train_loss, val_loss, lr)."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "lr"],
                           lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
