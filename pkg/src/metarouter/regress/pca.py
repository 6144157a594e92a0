"""PCA projection via eigendecomposition of the sample covariance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Projection", "fit_projection", "project"]


@dataclass(frozen=True)
class Projection:
    """Centered linear map onto the top principal directions (rows orthonormal)."""

    mean: np.ndarray
    components: np.ndarray  # (d, D), rows ordered by decreasing explained variance
    explained_variance: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Projection":
        return cls(
            mean=np.array(raw["mean"], dtype=np.float64),
            components=np.array(raw["components"], dtype=np.float64),
            explained_variance=np.array(raw["explained_variance"], dtype=np.float64),
        )


def fit_projection(X: np.ndarray, d: int) -> Projection:
    """Top-d principal directions of the centered data (covariance divisor n-1).

    Sign convention: each component's largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA requires at least 2 samples")
    n, D = X.shape
    if not 1 <= d <= D:
        raise ValueError(f"target dimension {d} must lie in [1, {D}]")
    mean = X.mean(axis=0)
    C = np.cov(X, rowvar=False, ddof=1).reshape(D, D)
    eigvals, eigvecs = np.linalg.eigh(C)
    order = np.argsort(eigvals)[::-1][:d]
    components = eigvecs[:, order].T.copy()
    variances = np.maximum(eigvals[order], 0.0)
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return Projection(mean=mean, components=components, explained_variance=variances)


def project(p: Projection, X: np.ndarray) -> np.ndarray:
    """Apply the centered projection: rows of ``(X - mean) @ components.T``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] != p.input_dim):
        raise ValueError(f"expected inputs of dimension {p.input_dim}, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.empty((0, p.d))
    return (X - p.mean) @ p.components.T
