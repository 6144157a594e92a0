"""Bagged random-subspace regression forest built on the tree kernel.

The split-search kernel is the hot loop; a compiled Cython build is preferred
and a pure-numpy twin is used when the extension is unavailable.  Selection
happens at import time and can be forced with METAROUTER_TREE_BACKEND
(``cython`` or ``python``).
"""

from __future__ import annotations

import math
import os

import numpy as np

from .specs import RegressorSpec
from . import _tree_py

_forced = os.environ.get("METAROUTER_TREE_BACKEND", "").strip().lower()
if _forced == "python":
    _kernel = _tree_py
elif _forced == "cython":
    from . import _tree_cy as _kernel  # noqa: F401  (raises if not built)
else:
    try:
        from . import _tree_cy as _kernel
    except ImportError:
        _kernel = _tree_py

TREE_BACKEND: str = _kernel.BACKEND_NAME

__all__ = ["Tree", "ForestModel", "fit_forest", "TREE_BACKEND", "predict_tree"]


class Tree:
    """Flat array representation of one fitted tree (feature == -1 marks a leaf)."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)


def predict_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Vectorized descent: route every row to its leaf, level by level."""
    node = np.zeros(X.shape[0], dtype=np.int32)
    active = tree.feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        cur = node[idx]
        xf = X[idx, tree.feature[cur]]
        node[idx] = np.where(xf <= tree.threshold[cur], tree.left[cur], tree.right[cur])
        active = tree.feature[node] >= 0
    return tree.value[node]


class ForestModel:
    """Average of bootstrap-fitted trees; deterministic given the spec seed."""

    def __init__(self, trees: list[Tree], spec: RegressorSpec, dim: int, n_train: int):
        self.trees = trees
        self.spec = spec
        self._dim = int(dim)
        self.n_train = int(n_train)

    @property
    def dim(self) -> int:
        return self._dim

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] != self.dim):
            raise ValueError(f"expected inputs of dimension {self.dim}, got shape {X.shape}")
        if X.shape[0] == 0:
            return np.empty(0)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += predict_tree(tree, X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": "tree_ensemble",
            "spec": self.spec.to_dict(),
            "dim": self.dim,
            "n_train": self.n_train,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ForestModel":
        trees = [
            Tree(t["feature"], t["threshold"], t["left"], t["right"], t["value"])
            for t in raw["trees"]
        ]
        return cls(
            trees=trees,
            spec=RegressorSpec.from_dict(raw["spec"]),
            dim=raw["dim"],
            n_train=raw["n_train"],
        )


def fit_forest(spec: RegressorSpec, X: np.ndarray, y: np.ndarray, w: np.ndarray) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    n_sub = max(1, math.ceil(spec.feature_subsample * d)) if d > 0 else 0
    # one state per tree for bootstrap draws, one for the split-search stream
    states = np.random.SeedSequence(spec.seed).generate_state(2 * spec.n_trees, dtype=np.uint64)
    trees = []
    for i in range(spec.n_trees):
        rng = np.random.default_rng(states[i])
        boot = rng.integers(0, n, size=n)
        arrays = _kernel.build_tree(
            X[boot], y[boot], w[boot],
            spec.max_depth, spec.min_leaf, n_sub, int(states[spec.n_trees + i]),
        )
        trees.append(Tree(*arrays))
    return ForestModel(trees=trees, spec=spec, dim=d, n_train=n)
