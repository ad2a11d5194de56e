"""Versioned JSON model files: flat weight arrays with explicit shapes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import MlpModel

MODEL_SCHEMA = "steplearn-mlp"
MODEL_VERSION = 1


class ModelFileError(ValueError):
    """Unreadable, truncated or incompatible model file."""


def _arr(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(d: dict) -> np.ndarray:
    data = np.asarray(d["data"], dtype=float)
    shape = tuple(int(s) for s in d["shape"])
    if data.size != int(np.prod(shape)):
        raise ModelFileError(f"array of shape {shape} holds {data.size} values")
    return data.reshape(shape)


def model_to_dict(model: MlpModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "target": model.target,
        "activation": "relu",
        "feature_names": list(model.feature_names),
        "dropped_features": dict(model.dropped),
        "x_mean": _arr(model.x_mean),
        "x_scale": _arr(model.x_scale),
        "y_mean": float(model.y_mean),
        "y_scale": float(model.y_scale),
        "layers": [{"weight": _arr(w), "bias": _arr(b)}
                   for w, b in zip(model.weights, model.biases)],
        "metadata": model.metadata,
    }


def model_from_dict(doc: dict) -> MlpModel:
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise ModelFileError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFileError(f"model schema version {doc.get('version')!r} is not supported "
                             f"(expected {MODEL_VERSION})")
    try:
        layers = doc["layers"]
        return MlpModel([_unarr(l["weight"]) for l in layers], [_unarr(l["bias"]) for l in layers],
                        list(doc["feature_names"]), _unarr(doc["x_mean"]), _unarr(doc["x_scale"]),
                        float(doc["y_mean"]), float(doc["y_scale"]),
                        dropped=dict(doc.get("dropped_features", {})),
                        target=doc.get("target", "cost"), metadata=doc.get("metadata", {}))
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"malformed model file: missing {exc}") from exc
    except ValueError as exc:
        raise ModelFileError(f"inconsistent model file: {exc}") from exc


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n")


def load_model(path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc}") from exc
    return model_from_dict(doc)
