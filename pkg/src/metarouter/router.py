"""Routing layer: outcome normalization, bias correction, router fits and the decision rule.

A router is a fitted quality-gain estimator m_hat over the query space.  The
decision rule contrasts the predicted gain of the premium model with the
(weighted) cost gap and picks the premium model only on a strictly positive
value; ties go to the cheaper model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cate import CateModel, predict_cate
from .data import GsSample, PbSample, Query, stack_embeddings
from .regress import RegressorSpec, RegressionModel, fit_regressor

__all__ = [
    "RouterError",
    "M_P",
    "M_A",
    "NormalizationMethod",
    "TokenPricing",
    "CostModel",
    "BINARY_COST",
    "QualityGainModel",
    "RoutingDecision",
    "compute_normalization",
    "scale_gs_outcomes",
    "bias_correct",
    "fit_meta_router",
    "fit_baseline_router",
    "cost_gap",
    "decision_value",
    "decide",
    "route",
]

M_P = "M_p"
M_A = "M_a"

NORMALIZATION_KINDS = ("magnitude", "variance", "wasserstein")
BASELINE_MODES = ("pooled", "gs_only", "oracle_full_gs")


class RouterError(ValueError):
    """Invalid routing inputs or degenerate normalization data."""


@dataclass(frozen=True)
class NormalizationMethod:
    """A normalization kind together with its resolved constant."""

    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in NORMALIZATION_KINDS:
            raise RouterError(f"unknown normalization kind {self.kind!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise RouterError(f"normalization constant must be positive and finite, got {self.c}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class TokenPricing:
    """Per-model token pricing: input rate, output rate and fixed per-call cost."""

    c_in: float = 0.0
    c_out: float = 0.0
    c_fix: float = 0.0

    def __post_init__(self):
        for name in ("c_in", "c_out", "c_fix"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise RouterError(f"{name} must be a nonnegative real")


@dataclass(frozen=True)
class CostModel:
    """Either the normalized binary cost (premium = 1, alternative = 0) or token pricing."""

    kind: str = "binary"
    p: TokenPricing | None = None
    a: TokenPricing | None = None

    def __post_init__(self):
        if self.kind not in ("binary", "token_based"):
            raise RouterError(f"unknown cost model kind {self.kind!r}")
        if self.kind == "token_based" and (self.p is None or self.a is None):
            raise RouterError("token_based cost requires pricing for both models")

    def to_dict(self) -> dict:
        if self.kind == "binary":
            return {"kind": "binary"}
        return {
            "kind": "token_based",
            "p": {"c_in": self.p.c_in, "c_out": self.p.c_out, "c_fix": self.p.c_fix},
            "a": {"c_in": self.a.c_in, "c_out": self.a.c_out, "c_fix": self.a.c_fix},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CostModel":
        if raw.get("kind") == "binary":
            return cls(kind="binary")
        if raw.get("kind") == "token_based":
            return cls(
                kind="token_based",
                p=TokenPricing(**raw["p"]),
                a=TokenPricing(**raw["a"]),
            )
        raise RouterError(f"unknown cost model kind {raw.get('kind')!r}")


BINARY_COST = CostModel(kind="binary")


@dataclass
class QualityGainModel:
    """A fitted GS quality-gain estimator with its provenance and normalization record."""

    predictor: RegressionModel
    provenance: str
    normalization: NormalizationMethod | None = None


@dataclass(frozen=True)
class RoutingDecision:
    choice: str
    decision_value: float
    w: float
    cost_gap: float


def _sd_pop(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(values - values.mean()))))


def _w2_squared_parts(r_sorted: np.ndarray, y_sorted: np.ndarray):
    """Piecewise-constant quantile functions evaluated on the merged grid.

    Returns (qr, qy, widths) such that the squared 2-Wasserstein distance
    between the empirical laws of c*r and y is sum(widths * (c*qr - qy)^2),
    exactly, for any c > 0.
    """
    n, m = len(r_sorted), len(y_sorted)
    edges = np.union1d(np.arange(1, n) / n, np.arange(1, m) / m)
    edges = np.concatenate([[0.0], edges, [1.0]])
    widths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    qr = r_sorted[np.minimum((mids * n).astype(np.int64), n - 1)]
    qy = y_sorted[np.minimum((mids * m).astype(np.int64), m - 1)]
    return qr, qy, widths


def _golden_section(fn, lo: float, hi: float, rel_tol: float = 1e-6) -> float:
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - phi * (b - a)
    c2 = a + phi * (b - a)
    f1, f2 = fn(c1), fn(c2)
    while b - a > rel_tol * max(1.0, abs(a) + abs(b)) / 2.0:
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - phi * (b - a)
            f1 = fn(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + phi * (b - a)
            f2 = fn(c2)
    return (a + b) / 2.0


def compute_normalization(r_vals, y_vals, kind: str = "variance") -> float:
    """Constant c > 0 putting {c * r_i} on the scale of {y_i}.

    * ``magnitude``: max|c*r| = max|y|;
    * ``variance``: population variances match;
    * ``wasserstein``: c approximately minimizes the 2-Wasserstein distance
      between the empirical laws, by golden-section search over
      (0, 10 * c_variance].
    """
    if kind not in NORMALIZATION_KINDS:
        raise RouterError(f"unknown normalization kind {kind!r}")
    r = np.asarray(r_vals, dtype=np.float64)
    y = np.asarray(y_vals, dtype=np.float64)
    if r.size == 0 or y.size == 0:
        raise RouterError("normalization requires nonempty GS and PB outcome lists")
    if kind == "magnitude":
        max_r = np.abs(r).max()
        if max_r == 0.0:
            raise RouterError("magnitude normalization is degenerate: all GS outcomes are zero")
        return float(np.abs(y).max() / max_r)
    sd_r = _sd_pop(r)
    if sd_r == 0.0:
        raise RouterError("normalization is degenerate: GS outcomes have zero variance")
    sd_y = _sd_pop(y)
    if sd_y == 0.0:
        raise RouterError("normalization is degenerate: PB outcomes have zero variance")
    c_var = sd_y / sd_r
    if kind == "variance":
        return float(c_var)
    qr, qy, widths = _w2_squared_parts(np.sort(r), np.sort(y))

    def w2sq(c):
        diff = c * qr - qy
        return float(np.sum(widths * diff * diff))

    return float(_golden_section(w2sq, 1e-12, 10.0 * c_var))


def scale_gs_outcomes(samples: list[GsSample], c: float) -> list[GsSample]:
    """Rescale GS quality gains by the normalization constant (queries shared)."""
    return [GsSample(query=s.query, r=c * s.r) for s in samples]


def bias_correct(pb: list[PbSample], delta: CateModel) -> list[GsSample]:
    """Turn PB samples into pseudo-GS samples: r' = y + Delta_hat(q')."""
    if not pb:
        return []
    shifts = predict_cate(delta, stack_embeddings(pb))
    return [GsSample(query=p.query, r=p.y + float(d)) for p, d in zip(pb, shifts)]


_META_PROVENANCE = {
    "r_learner": "meta_r",
    "dr_learner": "meta_dr",
    "oracle": "meta_oracle_delta",
}


def fit_meta_router(
    train_gs: list[GsSample],
    train_pb: list[PbSample],
    delta: CateModel,
    spec: RegressorSpec,
    normalization: NormalizationMethod | None = None,
) -> QualityGainModel:
    """Two-step router fit: bias-correct the PB data, then regress on the union.

    All samples are equally weighted; with an empty PB list this reduces to
    the GS-only fit.
    """
    enriched = list(train_gs) + bias_correct(train_pb, delta)
    if not enriched:
        raise RouterError("meta-router fit requires at least one training sample")
    X = stack_embeddings(enriched)
    y = np.array([s.r for s in enriched])
    model = fit_regressor(spec, X, y)
    provenance = _META_PROVENANCE.get(delta.learner_kind, f"meta_{delta.learner_kind}")
    return QualityGainModel(predictor=model, provenance=provenance, normalization=normalization)


def fit_baseline_router(
    mode: str,
    spec: RegressorSpec,
    train_gs: list[GsSample] | None = None,
    train_pb: list[PbSample] | None = None,
    oracle_gs: list[GsSample] | None = None,
    normalization: NormalizationMethod | None = None,
) -> QualityGainModel:
    """Fit one of the reference routers.

    * ``pooled``: regress observed outcomes on queries over GS and PB data
      without distinguishing the evaluation mechanism;
    * ``gs_only``: regress GS outcomes on the GS training queries alone;
    * ``oracle_full_gs``: regress GS outcomes over all training queries
      (``oracle_gs`` supplies them for the PB queries).
    """
    if mode not in BASELINE_MODES:
        raise RouterError(f"unknown baseline mode {mode!r}")
    if mode == "pooled":
        gs = train_gs or []
        pb = train_pb or []
        X_parts = [s.query.embedding for s in gs] + [s.query.embedding for s in pb]
        y_parts = [s.r for s in gs] + [s.y for s in pb]
        if not X_parts:
            raise RouterError("pooled fit requires training samples")
        model = fit_regressor(spec, np.stack(X_parts), np.array(y_parts))
    elif mode == "gs_only":
        if not train_gs:
            raise RouterError("gs_only fit requires GS training samples")
        model = fit_regressor(
            spec, stack_embeddings(train_gs), np.array([s.r for s in train_gs])
        )
    else:
        full = list(train_gs or []) + list(oracle_gs or [])
        if not full:
            raise RouterError(
                "oracle_full_gs requires GS outcomes for all training queries"
            )
        model = fit_regressor(spec, stack_embeddings(full), np.array([s.r for s in full]))
    return QualityGainModel(predictor=model, provenance=mode, normalization=normalization)


def cost_gap(cost: CostModel, q: Query | None) -> float:
    """C_p(q) - C_a(q): 1 under binary cost, token-priced difference otherwise."""
    if cost.kind == "binary":
        return 1.0
    if q is None:
        raise RouterError("token_based cost needs the query for its token counts")
    for name in ("tokens_in", "tokens_out_p", "tokens_out_a"):
        if getattr(q, name) is None:
            raise RouterError(f"query {q.id!r} lacks {name}, required by token_based cost")
    cp = cost.p.c_in * q.tokens_in + cost.p.c_out * q.tokens_out_p + cost.p.c_fix
    ca = cost.a.c_in * q.tokens_in + cost.a.c_out * q.tokens_out_a + cost.a.c_fix
    return cp - ca


def decision_value(m_hat_q: float, w: float, cost: CostModel = BINARY_COST,
                   q: Query | None = None) -> float:
    """m_hat(q) minus w times the cost gap (plain difference under binary cost).

    Deployments use w >= 0; sweeps may pass thresholds below zero (or -inf)
    to trace the full usage curve.
    """
    if cost.kind == "binary":
        return float(m_hat_q - w)
    gap = cost_gap(cost, q)
    return float(m_hat_q if gap == 0.0 else m_hat_q - w * gap)


def decide(m_hat_q: float, w: float, cost: CostModel = BINARY_COST,
           q: Query | None = None) -> RoutingDecision:
    """Routing decision from a precomputed quality-gain prediction."""
    value = decision_value(m_hat_q, w, cost, q)
    gap = 1.0 if cost.kind == "binary" else cost_gap(cost, q)
    return RoutingDecision(
        choice=M_P if value > 0.0 else M_A,
        decision_value=value,
        w=float(w),
        cost_gap=gap,
    )


def route(model: QualityGainModel, q: Query, w: float,
          cost: CostModel = BINARY_COST) -> RoutingDecision:
    """Predict the quality gain for one query and apply the decision rule.

    The query must already live in the predictor's input space (apply any
    persisted projection first).
    """
    m_hat = float(model.predictor.predict(q.embedding[None, :])[0])
    return decide(m_hat, w, cost, q)
