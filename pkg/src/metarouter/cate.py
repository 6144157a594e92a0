"""Shift-function estimation from combined GS/PB data.

The shift Delta(q) = m(q) - eta(q), the conditional bias of preference-based
outcomes relative to gold-standard ones, is a conditional average treatment
effect once the evaluation mechanism is read as a binary treatment.  Two
learners are provided:

* the residual-on-residual learner, which orthogonalizes outcomes and
  treatment against their regressions on the query and solves the weighted
  least-squares reduction of  min_h sum_i (o~_i - t~_i h(s_i))^2 ;
* the doubly robust learner, which regresses the pseudo-outcome
  (t - p)/(p(1-p)) * (o - mu_t) + mu1 - mu0  on the query and stays
  consistent when either the propensity or the outcome model is correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CombinedSample, combined_arrays
from .nuisance import NuisanceEstimates
from .regress import RegressorSpec, RegressionModel, fit_regressor, predict

__all__ = [
    "CateError",
    "CateModel",
    "fit_r_learner",
    "fit_dr_learner",
    "predict_cate",
    "oracle_cate_model",
]

LEARNER_KINDS = ("r_learner", "dr_learner", "oracle")


class CateError(ValueError):
    """Degenerate inputs for shift-function estimation."""


@dataclass
class CateModel:
    """A fitted shift-function estimator over the query space."""

    learner_kind: str
    predictor: RegressionModel
    nuisance_metadata: dict = field(default_factory=dict)


def _check_inputs(D, nu):
    if len(D) < 2:
        raise CateError("shift-function estimation needs at least 2 samples")
    if nu.p_hat.shape[0] != len(D):
        raise CateError("nuisance estimates do not cover the dataset")


def fit_r_learner(
    D: list[CombinedSample],
    nu: NuisanceEstimates,
    spec: RegressorSpec,
    resid_floor: float = 1e-6,
) -> CateModel:
    """Fit the residualized learner via its weighted-regression reduction.

    Writing o~ = o - gamma_hat and t~ = t - p_hat, the objective
    sum (o~ - t~ h(s))^2 equals the weighted problem of regressing o~/t~ on s
    with weights t~^2.  ``resid_floor`` only keeps the pseudo-target finite
    when |t~| collapses; such samples carry (t~)^2 ~ 0 weight anyway.
    """
    if resid_floor <= 0:
        raise CateError("resid_floor must be positive")
    _check_inputs(D, nu)
    S, t, o = combined_arrays(D)
    o_res = o - nu.gamma_hat
    t_res = t - nu.p_hat
    w = t_res * t_res
    if not (w > 1e-300).any():
        raise CateError("treatment residuals collapsed to zero; propensity is degenerate")
    t_safe = np.where(
        t_res >= 0.0,
        np.maximum(t_res, resid_floor),
        np.minimum(t_res, -resid_floor),
    )
    model = fit_regressor(spec, S, o_res / t_safe, weights=w)
    return CateModel(
        learner_kind="r_learner",
        predictor=model,
        nuisance_metadata={"clip": nu.clip, "K": int(nu.folds.max()),
                           "spec": spec.to_dict(), "resid_floor": resid_floor},
    )


def fit_dr_learner(
    D: list[CombinedSample],
    nu: NuisanceEstimates,
    spec: RegressorSpec,
) -> CateModel:
    """Fit the doubly robust learner: regress the pseudo-outcome on the query."""
    _check_inputs(D, nu)
    S, t, o = combined_arrays(D)
    mu_t = np.where(t == 1.0, nu.mu1_hat, nu.mu0_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = (t - nu.p_hat) / (nu.p_hat * (1.0 - nu.p_hat))
        phi = scale * (o - mu_t) + nu.mu1_hat - nu.mu0_hat
    if not np.isfinite(phi).all():
        raise CateError("non-finite pseudo-outcome; propensities must be clipped away from {0,1}")
    model = fit_regressor(spec, S, phi)
    return CateModel(
        learner_kind="dr_learner",
        predictor=model,
        nuisance_metadata={"clip": nu.clip, "K": int(nu.folds.max()), "spec": spec.to_dict()},
    )


def dr_pseudo_outcomes(D: list[CombinedSample], nu: NuisanceEstimates) -> np.ndarray:
    """The doubly robust pseudo-outcomes; their mean is the AIPW effect estimate."""
    _, t, o = combined_arrays(D)
    mu_t = np.where(t == 1.0, nu.mu1_hat, nu.mu0_hat)
    return (t - nu.p_hat) / (nu.p_hat * (1.0 - nu.p_hat)) * (o - mu_t) + nu.mu1_hat - nu.mu0_hat


def predict_cate(model: CateModel, queries) -> np.ndarray:
    """Evaluate the fitted shift function on query embeddings (pure)."""
    return predict(model.predictor, queries)


def oracle_cate_model(delta_fn, dim: int) -> CateModel:
    """Wrap a known shift function as a CateModel (for oracle experiments).

    ``delta_fn`` maps an (n, dim) array to n shift values.
    """

    class _FnPredictor:
        def __init__(self):
            self.spec = None
            self.n_train = 0

        @property
        def dim(self):
            return dim

        def predict(self, X):
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] != dim):
                raise ValueError(f"expected inputs of dimension {dim}, got shape {X.shape}")
            return np.asarray(delta_fn(X), dtype=np.float64)

    return CateModel(learner_kind="oracle", predictor=_FnPredictor(), nuisance_metadata={})
