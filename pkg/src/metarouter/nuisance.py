"""Cross-fitted nuisance estimation for the shift-function learners.

Estimates, per combined sample, the propensity of receiving a GS evaluation
p(s), the marginal outcome regression gamma(s) = E(o | s) and the
arm-conditional regressions mu0(s), mu1(s), all predicted out-of-fold so a
sample's own outcome never leaks into its nuisance values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import mask64
from .data import CombinedSample, combined_arrays
from .regress import RegressorSpec, RegressionModel, fit_regressor

__all__ = [
    "NuisanceError",
    "NuisanceEstimates",
    "assign_folds",
    "crossfit_propensity",
    "crossfit_marginal",
    "crossfit_conditional",
    "estimate_nuisances",
    "nuisances_from_truth",
]


class NuisanceError(ValueError):
    """Degenerate inputs for nuisance estimation."""


@dataclass
class NuisanceEstimates:
    """Per-sample nuisance values plus the fold assignment that produced them."""

    p_hat: np.ndarray
    gamma_hat: np.ndarray
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    folds: np.ndarray
    clip: float
    refit_models: dict[str, RegressionModel] | None = field(default=None, repr=False)


def assign_folds(n: int, K: int, seed: int) -> np.ndarray:
    """Balanced fold ids in {1..K} (sizes differ by at most one), seeded."""
    if not 1 <= K <= n:
        raise NuisanceError(f"fold count K={K} must lie in [1, {n}]")
    rng = np.random.default_rng(mask64(seed))
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % K + 1
    return folds


def _check_clip(clip: float):
    if not 0.0 < clip < 0.5:
        raise NuisanceError(f"clip={clip} must lie strictly inside (0, 0.5)")


def _crossfit(S, target, spec, folds, train_mask=None):
    """Out-of-fold predictions of ``target`` on ``S``.

    ``train_mask`` restricts which samples are fitted on (arm-conditional
    regressions); predictions are still produced for every sample.
    """
    K = int(folds.max())
    out = np.empty(S.shape[0])
    for k in range(1, K + 1):
        test = folds == k
        train = np.ones_like(test) if K == 1 else ~test
        if train_mask is not None:
            train = train & train_mask
        if not train.any():
            raise NuisanceError(
                f"fold {k}: no training samples available for one regression arm"
            )
        model = fit_regressor(spec, S[train], target[train])
        out[test] = model.predict(S[test])
    return out


def crossfit_propensity(
    D: list[CombinedSample],
    spec: RegressorSpec,
    K: int = 5,
    clip: float = 0.01,
    seed: int = 0,
    folds: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold regression of the evaluation indicator t on s, clamped to [clip, 1-clip]."""
    _check_clip(clip)
    S, t, _ = combined_arrays(D)
    if S.shape[0] == 0:
        raise NuisanceError("cannot estimate a propensity on an empty dataset")
    if folds is None:
        folds = assign_folds(len(D), K, seed)
    if K > 1 and (t.min() == t.max()):
        raise NuisanceError(
            "all samples share one evaluation mechanism; the propensity is degenerate "
            "(consider a constant p_hat = clamp(mean t) fallback)"
        )
    raw = _crossfit(S, t, spec, folds)
    return np.clip(raw, clip, 1.0 - clip), folds


def crossfit_marginal(
    D: list[CombinedSample],
    spec: RegressorSpec,
    K: int = 5,
    seed: int = 0,
    folds: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-fold regression of the observed outcome o on s."""
    S, _, o = combined_arrays(D)
    if S.shape[0] == 0:
        raise NuisanceError("cannot estimate the marginal outcome on an empty dataset")
    if folds is None:
        folds = assign_folds(len(D), K, seed)
    return _crossfit(S, o, spec, folds), folds


def crossfit_conditional(
    D: list[CombinedSample],
    spec: RegressorSpec,
    K: int = 5,
    seed: int = 0,
    folds: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Out-of-fold arm-conditional regressions: mu1 on GS samples, mu0 on PB samples."""
    S, t, o = combined_arrays(D)
    if S.shape[0] == 0:
        raise NuisanceError("cannot estimate conditional outcomes on an empty dataset")
    if folds is None:
        folds = assign_folds(len(D), K, seed)
    mu1 = _crossfit(S, o, spec, folds, train_mask=t == 1)
    mu0 = _crossfit(S, o, spec, folds, train_mask=t == 0)
    return mu0, mu1, folds


def estimate_nuisances(
    D: list[CombinedSample],
    propensity_spec: RegressorSpec,
    outcome_spec: RegressorSpec,
    K: int = 5,
    clip: float = 0.01,
    seed: int = 0,
    composed_gamma: bool = False,
    fit_refits: bool = False,
) -> NuisanceEstimates:
    """Estimate all nuisances on one shared fold assignment.

    With ``composed_gamma`` the marginal regression is composed as
    p_hat * mu1 + (1 - p_hat) * mu0 instead of fitted directly.
    ``fit_refits`` additionally fits full-data models for out-of-sample use.
    """
    folds = assign_folds(len(D), K, seed)
    p_hat, _ = crossfit_propensity(D, propensity_spec, K, clip, folds=folds)
    mu0, mu1, _ = crossfit_conditional(D, outcome_spec, K, folds=folds)
    if composed_gamma:
        gamma = p_hat * mu1 + (1.0 - p_hat) * mu0
    else:
        gamma, _ = crossfit_marginal(D, outcome_spec, K, folds=folds)
    refits = None
    if fit_refits:
        S, t, o = combined_arrays(D)
        refits = {
            "propensity": fit_regressor(propensity_spec, S, t),
            "marginal": fit_regressor(outcome_spec, S, o),
            "mu1": fit_regressor(outcome_spec, S[t == 1], o[t == 1]),
            "mu0": fit_regressor(outcome_spec, S[t == 0], o[t == 0]),
        }
    return NuisanceEstimates(
        p_hat=p_hat, gamma_hat=gamma, mu0_hat=mu0, mu1_hat=mu1,
        folds=folds, clip=clip, refit_models=refits,
    )


def nuisances_from_truth(
    D: list[CombinedSample],
    p_true: np.ndarray,
    mu0_true: np.ndarray,
    mu1_true: np.ndarray,
    gamma_true: np.ndarray | None = None,
    clip: float = 0.01,
) -> NuisanceEstimates:
    """Plug-in nuisances from known generator functions (oracle experiments).

    True propensities are still clamped to [clip, 1-clip]; gamma defaults to
    the consistent composition p*mu1 + (1-p)*mu0.
    """
    _check_clip(clip)
    n = len(D)
    p = np.clip(np.asarray(p_true, dtype=np.float64), clip, 1.0 - clip)
    mu0 = np.asarray(mu0_true, dtype=np.float64)
    mu1 = np.asarray(mu1_true, dtype=np.float64)
    if not (p.shape[0] == mu0.shape[0] == mu1.shape[0] == n):
        raise NuisanceError("plug-in nuisance arrays must cover every sample")
    gamma = p * mu1 + (1.0 - p) * mu0 if gamma_true is None else np.asarray(gamma_true)
    return NuisanceEstimates(
        p_hat=p, gamma_hat=gamma, mu0_hat=mu0, mu1_hat=mu1,
        folds=np.ones(n, dtype=np.int64), clip=clip,
    )
