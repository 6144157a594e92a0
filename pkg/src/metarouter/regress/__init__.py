"""Pluggable regression layer: ridge, knn and a bagged tree ensemble, plus PCA.

Every estimator in the package reduces to ``fit_regressor`` / ``predict`` on
query embeddings, optionally with per-sample weights.
"""

from __future__ import annotations

import numpy as np

from .specs import RegressorSpec, SpecError
from .linear import RidgeModel, fit_ridge
from .neighbors import KnnModel, fit_knn
from .forest import ForestModel, Tree, TREE_BACKEND, fit_forest, predict_tree
from .pca import Projection, fit_projection, project

__all__ = [
    "RegressorSpec",
    "SpecError",
    "RegressionModel",
    "RidgeModel",
    "KnnModel",
    "ForestModel",
    "Tree",
    "TREE_BACKEND",
    "fit_regressor",
    "predict",
    "model_from_dict",
    "Projection",
    "fit_projection",
    "project",
    "predict_tree",
]

# anything with predict/dim/spec/n_train/to_dict
RegressionModel = RidgeModel | KnnModel | ForestModel


def _validate_inputs(X, y, weights):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible training shapes X{X.shape}, y{y.shape}")
    if X.shape[0] < 1:
        raise ValueError("cannot fit a regressor on empty data")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data contains non-finite values")
    if weights is None:
        return X, y, None
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape:
        raise ValueError("weights must match the number of samples")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("weights must be finite and nonnegative")
    if not (w > 0).any():
        raise ValueError("weights must include at least one positive entry")
    return X, y, w


def fit_regressor(spec: RegressorSpec, X, y, weights=None) -> RegressionModel:
    """Fit the regressor described by ``spec`` on (X, y), optionally weighted."""
    X, y, w = _validate_inputs(X, y, weights)
    ones = np.ones(X.shape[0]) if w is None else w
    if spec.kind == "ridge":
        return fit_ridge(spec, X, y, ones)
    if spec.kind == "knn":
        return fit_knn(spec, X, y, w)
    return fit_forest(spec, X, y, ones)


def predict(model: RegressionModel, X) -> np.ndarray:
    """Evaluate a fitted model on rows of ``X`` (pure, deterministic)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        return np.empty(0)
    return model.predict(X)


_MODEL_CLASSES = {"ridge": RidgeModel, "knn": KnnModel, "tree_ensemble": ForestModel}


def model_from_dict(raw: dict) -> RegressionModel:
    """Rebuild a serialized model (inverse of each model's ``to_dict``)."""
    kind = raw.get("kind")
    if kind not in _MODEL_CLASSES:
        raise SpecError(f"unknown serialized model kind {kind!r}")
    return _MODEL_CLASSES[kind].from_dict(raw)
