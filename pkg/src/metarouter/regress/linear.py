"""Weighted ridge regression solved exactly by normal equations."""

from __future__ import annotations

import numpy as np

from .specs import RegressorSpec

__all__ = ["RidgeModel", "fit_ridge"]


class RidgeModel:
    """Linear predictor ``intercept + x @ coefs``; the intercept is never penalized."""

    def __init__(self, intercept: float, coefs: np.ndarray, spec: RegressorSpec, n_train: int):
        self.intercept = float(intercept)
        self.coefs = np.asarray(coefs, dtype=np.float64)
        self.spec = spec
        self.n_train = int(n_train)

    @property
    def dim(self) -> int:
        return self.coefs.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] != self.dim):
            raise ValueError(f"expected inputs of dimension {self.dim}, got shape {X.shape}")
        if X.shape[0] == 0:
            return np.empty(0)
        return self.intercept + X @ self.coefs

    def to_dict(self) -> dict:
        return {
            "kind": "ridge",
            "spec": self.spec.to_dict(),
            "intercept": self.intercept,
            "coefs": self.coefs.tolist(),
            "n_train": self.n_train,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RidgeModel":
        return cls(
            intercept=raw["intercept"],
            coefs=np.array(raw["coefs"], dtype=np.float64),
            spec=RegressorSpec.from_dict(raw["spec"]),
            n_train=raw["n_train"],
        )


def fit_ridge(spec: RegressorSpec, X: np.ndarray, y: np.ndarray, w: np.ndarray) -> RidgeModel:
    """Minimize sum_i w_i (y_i - b0 - x_i'b)^2 + lam * ||b||^2 exactly.

    With ``lam == 0`` the (possibly rank-deficient) weighted least-squares
    problem is solved by minimum-norm lstsq on the weighted design; with
    ``lam > 0`` the penalized normal equations are positive definite and
    solved directly.
    """
    n, d = X.shape
    Z = np.concatenate([np.ones((n, 1)), X], axis=1)
    if spec.lam > 0.0:
        A = Z.T @ (w[:, None] * Z)
        A[1:, 1:] += spec.lam * np.eye(d)
        b = Z.T @ (w * y)
        beta = np.linalg.solve(A, b)
    else:
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(sw[:, None] * Z, sw * y, rcond=None)
    return RidgeModel(intercept=beta[0], coefs=beta[1:], spec=spec, n_train=n)
