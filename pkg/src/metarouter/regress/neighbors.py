"""k-nearest-neighbor regression on Euclidean distance."""

from __future__ import annotations

import numpy as np

from .specs import RegressorSpec

__all__ = ["KnnModel", "fit_knn"]


class KnnModel:
    """Stores the training set; predicts the (weighted) mean of the k nearest labels.

    Neighbor ties are broken by lower training index.  Under inverse-distance
    weighting an exact match dominates: prediction falls back to the mean of
    all zero-distance neighbors.
    """

    def __init__(self, X, y, sample_weights, spec: RegressorSpec):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.sample_weights = (
            None if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
        )
        self.spec = spec

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    def _point(self, x: np.ndarray) -> float:
        d2 = np.square(self.X - x).sum(axis=1)
        order = np.lexsort((np.arange(self.n_train), d2))[: self.spec.k]
        labels = self.y[order]
        base = np.ones(order.shape[0]) if self.sample_weights is None else self.sample_weights[order]
        if self.spec.weighting == "inverse_distance":
            dist = np.sqrt(d2[order])
            if np.any(dist == 0.0):
                mask = dist == 0.0
                labels, base = labels[mask], base[mask]
            else:
                base = base / dist
        total = base.sum()
        if total <= 0.0:
            return float(labels.mean())
        return float((base * labels).sum() / total)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] != self.dim):
            raise ValueError(f"expected inputs of dimension {self.dim}, got shape {X.shape}")
        return np.array([self._point(x) for x in X])

    def to_dict(self) -> dict:
        return {
            "kind": "knn",
            "spec": self.spec.to_dict(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "sample_weights": None if self.sample_weights is None else self.sample_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "KnnModel":
        return cls(
            X=np.array(raw["X"], dtype=np.float64),
            y=np.array(raw["y"], dtype=np.float64),
            sample_weights=raw["sample_weights"],
            spec=RegressorSpec.from_dict(raw["spec"]),
        )


def fit_knn(spec: RegressorSpec, X, y, w) -> KnnModel:
    if spec.k > X.shape[0]:
        raise ValueError(f"knn k={spec.k} exceeds the {X.shape[0]} training samples")
    return KnnModel(X=X.copy(), y=y.copy(), sample_weights=w, spec=spec)
