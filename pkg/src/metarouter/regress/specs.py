"""Regressor configuration records (hypothesis class + regularizer in one value)."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["RegressorSpec", "SpecError"]

KINDS = ("ridge", "knn", "tree_ensemble")
KNN_WEIGHTINGS = ("uniform", "inverse_distance")


class SpecError(ValueError):
    """Invalid regressor configuration."""


@dataclass(frozen=True)
class RegressorSpec:
    """Configuration of one of the built-in regressors.

    Only the fields relevant to ``kind`` are meaningful; use the classmethod
    constructors rather than filling the record by hand.
    """

    kind: str
    lam: float = 0.0
    k: int = 5
    weighting: str = "uniform"
    n_trees: int = 200
    max_depth: int = 12
    min_leaf: int = 5
    feature_subsample: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown regressor kind {self.kind!r}")
        if self.kind == "ridge" and (self.lam < 0 or self.lam != self.lam):
            raise SpecError("ridge penalty lam must be a nonnegative real")
        if self.kind == "knn":
            if self.k < 1:
                raise SpecError("knn k must be a positive integer")
            if self.weighting not in KNN_WEIGHTINGS:
                raise SpecError(f"unknown knn weighting {self.weighting!r}")
        if self.kind == "tree_ensemble":
            if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
                raise SpecError("n_trees, max_depth and min_leaf must be positive integers")
            if not 0.0 < self.feature_subsample <= 1.0:
                raise SpecError("feature_subsample must lie in (0, 1]")

    @classmethod
    def ridge(cls, lam: float = 0.0) -> "RegressorSpec":
        return cls(kind="ridge", lam=float(lam))

    @classmethod
    def knn(cls, k: int = 5, weighting: str = "uniform") -> "RegressorSpec":
        return cls(kind="knn", k=int(k), weighting=weighting)

    @classmethod
    def tree_ensemble(
        cls,
        n_trees: int = 200,
        max_depth: int = 12,
        min_leaf: int = 5,
        feature_subsample: float = 1.0 / 3.0,
        seed: int = 0,
    ) -> "RegressorSpec":
        return cls(
            kind="tree_ensemble",
            n_trees=int(n_trees),
            max_depth=int(max_depth),
            min_leaf=int(min_leaf),
            feature_subsample=float(feature_subsample),
            seed=int(seed),
        )

    def to_dict(self) -> dict:
        if self.kind == "ridge":
            return {"kind": "ridge", "lam": self.lam}
        if self.kind == "knn":
            return {"kind": "knn", "k": self.k, "weighting": self.weighting}
        return {
            "kind": "tree_ensemble",
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "feature_subsample": self.feature_subsample,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RegressorSpec":
        if not isinstance(raw, dict) or "kind" not in raw:
            raise SpecError("regressor spec must be an object with a 'kind' field")
        kind = raw["kind"]
        if kind not in KINDS:
            raise SpecError(f"unknown regressor kind {kind!r}")
        allowed = {
            "ridge": {"kind", "lam"},
            "knn": {"kind", "k", "weighting"},
            "tree_ensemble": {
                "kind", "n_trees", "max_depth", "min_leaf", "feature_subsample", "seed",
            },
        }[kind]
        unknown = set(raw) - allowed
        if unknown:
            raise SpecError(f"unknown keys for {kind} spec: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k != "kind"}
        return {
            "ridge": cls.ridge,
            "knn": cls.knn,
            "tree_ensemble": cls.tree_ensemble,
        }[kind](**kwargs)
