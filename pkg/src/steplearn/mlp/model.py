"""Feed-forward ReLU regressor with built-in input / target standardisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Input width does not match the model."""


@dataclass
class MlpModel:
    """Layers ``h_{m+1} = relu(W_m h_m + b_m)`` with an affine output layer.

    ``weights[m]`` has shape (out, in). Inputs are the kept feature columns in
    ``feature_names`` order; they are standardised with ``x_mean``/``x_scale``
    before the first layer, and the scalar output is mapped back to target
    units with ``y_mean + y_scale * out``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_names: list[str]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    dropped: dict = field(default_factory=dict)  # constant features removed before training
    target: str = "cost"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        self.x_mean = np.asarray(self.x_mean, dtype=float)
        self.x_scale = np.asarray(self.x_scale, dtype=float)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        prev = self.weights[0].shape[1]
        for m, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != prev or b.shape != (w.shape[0],):
                raise ValueError(f"layer {m} has incompatible shapes {w.shape}, {b.shape}")
            prev = w.shape[0]
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")
        if len(self.feature_names) != self.n_inputs or self.x_mean.shape != (self.n_inputs,) \
                or self.x_scale.shape != (self.n_inputs,):
            raise ValueError("normalisation statistics do not match the input width")
        if np.any(self.x_scale <= 0) or self.y_scale <= 0:
            raise ValueError("scales must be positive")
        for arr in [*self.weights, *self.biases, self.x_mean, self.x_scale]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_widths(self) -> list[int]:
        return [w.shape[0] for w in self.weights[:-1]]

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @classmethod
    def identity_normalised(cls, weights, biases, target: str = "cost") -> "MlpModel":
        n = np.asarray(weights[0]).shape[1]
        return cls([np.atleast_2d(w) for w in weights], biases,
                   [f"x{i}" for i in range(n)], np.zeros(n), np.ones(n), target=target)

    def normalise_x(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_scale

    def normalise_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def denormalise_y(self, z):
        return self.y_mean + self.y_scale * np.asarray(z, dtype=float)

    def select(self, features: dict | None = None, X=None, names=None) -> np.ndarray:
        """Pick the model's input columns from a name->value dict or a named matrix."""
        if features is not None:
            return np.array([float(features[k]) for k in self.feature_names])
        pos = {n: i for i, n in enumerate(names)}
        return np.asarray(X)[:, [pos[k] for k in self.feature_names]]

    def forward_normalised(self, Z: np.ndarray) -> np.ndarray:
        """Network output on standardised inputs, in standardised target units."""
        h = Z.T
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(w @ h + b[:, None], 0.0)
        return (self.weights[-1] @ h + self.biases[-1][:, None])[0]


def forward(model: MlpModel, x) -> np.ndarray | float:
    """Prediction in target units for one feature vector (scalar) or a row matrix."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != model.n_inputs:
        raise DimensionError(f"expected {model.n_inputs} features, got shape {X.shape}")
    out = model.denormalise_y(model.forward_normalised(model.normalise_x(X2)))
    return float(out[0]) if single else out


def pre_activations(model: MlpModel, x) -> list[np.ndarray]:
    """Hidden pre-activations per layer for a row matrix of raw features."""
    h = model.normalise_x(np.atleast_2d(np.asarray(x, dtype=float))).T
    out = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = w @ h + b[:, None]
        out.append(a.T)
        h = np.maximum(a, 0.0)
    return out


def init_params(n_in: int, hidden, rng: np.random.Generator) -> tuple[list, list]:
    """He-normal weights, zero biases."""
    sizes = [n_in, *hidden, 1]
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(b, a)))
        bs.append(np.zeros(b))
    return ws, bs
