"""Synthetic GS/PB data with retained ground truth.

Two equivalent generators are provided: the joint process (draw the
evaluation mechanism first, then the query from the mechanism-specific
distribution) and the causal process (draw the query from the mixture, then
the mechanism from the density-ratio propensity).  Every sample retains both
potential outcomes and the true mean/shift/propensity values so estimators
can be checked against the generator, and the distributional equivalence of
the two processes is itself testable via ``equivalence_diagnostics``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import mask64
from .data import CombinedSample, GsSample, PbSample, Query

__all__ = [
    "SynthError",
    "GaussianSpec",
    "FunctionSpec",
    "NoiseSpec",
    "SynthConfig",
    "SynthSample",
    "RoutingRoundData",
    "generate_joint",
    "generate_causal",
    "generate_routing_round",
    "true_propensity",
    "equivalence_diagnostics",
    "EquivalenceReport",
    "combined_from_synth",
    "arms_from_synth",
    "DISCRETE_TIE_MASS",
]

DISCRETE_TIE_MASS = 0.2

# frozen diagnostic thresholds (calibrated well beyond 3-sigma at n >= 50000)
MEAN_T_GAP_MAX = 0.012
BIN_GAP_MAX = 0.05
KS_MAX = 0.02
MIN_BIN_COUNT = 200


class SynthError(ValueError):
    """Invalid synthetic-generator configuration.

    ``field`` optionally names the offending configuration key so callers can
    report a full dotted path.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _as_vector(value, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise SynthError(f"{name} must be a scalar or a length-{dim} vector")
    if not np.isfinite(arr).all():
        raise SynthError(f"{name} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Diagonal-covariance Gaussian over the query embedding space."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if (self.var <= 0).any():
            raise SynthError("var entries must be strictly positive")

    def __eq__(self, other):
        return (isinstance(other, GaussianSpec)
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.var, other.var))

    @classmethod
    def create(cls, mean, var, dim: int) -> "GaussianSpec":
        return cls(mean=_as_vector(mean, dim, "mean"), var=_as_vector(var, dim, "var"))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.mean.shape[0]))

    def log_density(self, S: np.ndarray) -> np.ndarray:
        z = (S - self.mean) ** 2 / self.var
        const = np.sum(np.log(2.0 * math.pi * self.var))
        return -0.5 * (z.sum(axis=1) + const)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist()}


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """Mean-function descriptor over the query space: constant, linear or radial."""

    kind: str
    value: float = 0.0
    coefs: np.ndarray | None = None
    intercept: float = 0.0
    center: np.ndarray | None = None
    scale: float = 1.0
    amplitude: float = 1.0

    def __eq__(self, other):
        if not isinstance(other, FunctionSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @classmethod
    def constant(cls, value: float) -> "FunctionSpec":
        return cls(kind="constant", value=float(value))

    @classmethod
    def linear(cls, coefs, intercept: float = 0.0) -> "FunctionSpec":
        return cls(kind="linear", coefs=np.asarray(coefs, dtype=np.float64),
                   intercept=float(intercept))

    @classmethod
    def radial(cls, center, scale: float, amplitude: float) -> "FunctionSpec":
        if scale <= 0:
            raise SynthError("radial scale must be positive")
        return cls(kind="radial", center=np.asarray(center, dtype=np.float64),
                   scale=float(scale), amplitude=float(amplitude))

    def evaluate(self, S: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(S.shape[0], self.value)
        if self.kind == "linear":
            return S @ self.coefs + self.intercept
        if self.kind == "radial":
            d2 = np.square(S - self.center).sum(axis=1)
            return self.amplitude * np.exp(-d2 / (2.0 * self.scale**2))
        raise SynthError(f"unknown function kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "linear":
            return {"kind": "linear", "coefs": self.coefs.tolist(), "intercept": self.intercept}
        return {"kind": "radial", "center": self.center.tolist(),
                "scale": self.scale, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, raw: dict, dim: int) -> "FunctionSpec":
        kind = raw.get("kind")
        if kind == "constant":
            return cls.constant(raw["value"])
        if kind == "linear":
            return cls.linear(_as_vector(raw["coefs"], dim, "coefs"),
                              float(raw.get("intercept", 0.0)))
        if kind == "radial":
            return cls.radial(_as_vector(raw["center"], dim, "center"),
                              float(raw["scale"]), float(raw["amplitude"]))
        raise SynthError(f"unknown function kind {kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Outcome noise: mean-zero Gaussian, or the discrete pairwise-judge sampler.

    The discrete sampler emits {-1, 0, 1} with a fixed tie mass and mean equal
    to the conditional mean function, which must stay within
    [-(1 - tie mass), 1 - tie mass].
    """

    kind: str
    sigma: float = 0.0

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseSpec":
        if sigma < 0:
            raise SynthError("sigma must be nonnegative")
        return cls(kind="gaussian", sigma=float(sigma))

    @classmethod
    def discrete(cls) -> "NoiseSpec":
        return cls(kind="discrete")

    def sample_outcomes(self, rng: np.random.Generator, means: np.ndarray) -> np.ndarray:
        if self.kind == "gaussian":
            return means + self.sigma * rng.standard_normal(means.shape[0])
        z = DISCRETE_TIE_MASS
        if (np.abs(means) > 1.0 - z).any():
            raise SynthError(
                f"discrete outcome sampler requires |conditional mean| <= {1.0 - z}"
            )
        p_plus = (1.0 + means) / 2.0 - z / 2.0
        u = rng.random(means.shape[0])
        return np.where(u < p_plus, 1.0, np.where(u < p_plus + z, 0.0, -1.0))

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "sigma": self.sigma}
        return {"kind": "discrete"}

    @classmethod
    def from_dict(cls, raw: dict) -> "NoiseSpec":
        kind = raw.get("kind")
        if kind == "gaussian":
            return cls.gaussian(float(raw["sigma"]))
        if kind == "discrete":
            return cls.discrete()
        raise SynthError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class SynthConfig:
    """Full description of the GS/PB generative process."""

    kappa: float
    dim: int
    q_dist: GaussianSpec
    q_prime_dist: GaussianSpec
    m_spec: FunctionSpec
    eta_spec: FunctionSpec
    noise_gs: NoiseSpec
    noise_pb: NoiseSpec
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise SynthError("kappa must lie in [0, 1]")
        if self.dim < 1:
            raise SynthError("dim must be a positive integer")
        for name, dist in (("q_dist", self.q_dist), ("q_prime_dist", self.q_prime_dist)):
            if dist.mean.shape != (self.dim,):
                raise SynthError(f"{name} does not match dim={self.dim}")

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "dim": self.dim,
            "q_dist": self.q_dist.to_dict(),
            "q_prime_dist": self.q_prime_dist.to_dict(),
            "m": self.m_spec.to_dict(),
            "eta": self.eta_spec.to_dict(),
            "noise_gs": self.noise_gs.to_dict(),
            "noise_pb": self.noise_pb.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        required = {"kappa", "dim", "q_dist", "q_prime_dist", "m", "eta"}
        missing = required - set(raw)
        if missing:
            raise SynthError(f"missing fields: {sorted(missing)}")
        known = required | {"noise_gs", "noise_pb", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise SynthError(f"unknown fields: {sorted(unknown)}")
        dim = int(raw["dim"])
        if dim < 1:
            raise SynthError("dim must be a positive integer", field="dim")
        kappa = float(raw["kappa"])
        if not 0.0 <= kappa <= 1.0:
            raise SynthError("kappa must lie in [0, 1]", field="kappa")
        return cls(
            kappa=kappa,
            dim=dim,
            q_dist=GaussianSpec.create(raw["q_dist"].get("mean", 0.0),
                                       raw["q_dist"].get("var", 1.0), dim),
            q_prime_dist=GaussianSpec.create(raw["q_prime_dist"].get("mean", 0.0),
                                             raw["q_prime_dist"].get("var", 1.0), dim),
            m_spec=FunctionSpec.from_dict(raw["m"], dim),
            eta_spec=FunctionSpec.from_dict(raw["eta"], dim),
            noise_gs=NoiseSpec.from_dict(raw.get("noise_gs", {"kind": "gaussian", "sigma": 0.1})),
            noise_pb=NoiseSpec.from_dict(raw.get("noise_pb", {"kind": "gaussian", "sigma": 0.1})),
            seed=int(raw.get("seed", 0)),
        )


@dataclass(eq=False)
class SynthSample:
    """A combined sample plus the generator's ground truth for it."""

    combined: CombinedSample
    o1_true: float
    o0_true: float
    m_true: float
    eta_true: float
    p_true: float


@dataclass
class RoutingRoundData:
    """One round of router training data drawn directly from the generative process."""

    test: list[GsSample]
    train_gs: list[GsSample]
    train_pb: list[PbSample]
    oracle_gs: list[GsSample]  # GS outcomes for the PB training queries


def true_propensity(s, cfg: SynthConfig):
    """P(GS evaluation | s) = kappa f_Q(s) / (kappa f_Q(s) + (1-kappa) f_Q'(s)).

    Computed from log-densities for stability; accepts a single vector or an
    (n, dim) array.  Flags a positivity violation when both densities vanish.
    """
    S = np.asarray(s, dtype=np.float64)
    single = S.ndim == 1
    if single:
        S = S[None, :]
    if S.shape[1] != cfg.dim:
        raise SynthError(f"expected dimension {cfg.dim}, got {S.shape[1]}")
    if cfg.kappa == 0.0:
        p = np.zeros(S.shape[0])
    elif cfg.kappa == 1.0:
        p = np.ones(S.shape[0])
    else:
        l1 = math.log(cfg.kappa) + cfg.q_dist.log_density(S)
        l0 = math.log(1.0 - cfg.kappa) + cfg.q_prime_dist.log_density(S)
        if np.isneginf(np.maximum(l1, l0)).any():
            raise SynthError("positivity violation: both query densities vanish at a sample")
        d = l1 - l0
        p = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                     np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return float(p[0]) if single else p


def _draw_potentials(rng, cfg, S):
    m_vals = cfg.m_spec.evaluate(S)
    eta_vals = cfg.eta_spec.evaluate(S)
    o1 = cfg.noise_gs.sample_outcomes(rng, m_vals)
    o0 = cfg.noise_pb.sample_outcomes(rng, eta_vals)
    return m_vals, eta_vals, o1, o0


def _build_samples(tag, S, t, m_vals, eta_vals, o1, o0, p):
    o = np.where(t == 1, o1, o0)
    samples = []
    for i in range(S.shape[0]):
        q = Query(id=f"{tag}-{i:06d}", embedding=S[i])
        combined = CombinedSample(s=q, t=int(t[i]), o=float(o[i]), origin=("synthetic", i))
        samples.append(SynthSample(
            combined=combined,
            o1_true=float(o1[i]), o0_true=float(o0[i]),
            m_true=float(m_vals[i]), eta_true=float(eta_vals[i]), p_true=float(p[i]),
        ))
    return samples


def generate_joint(cfg: SynthConfig, N: int, seed: int | None = None,
                   tag: str = "joint") -> list[SynthSample]:
    """Mechanism first: t ~ Bernoulli(kappa), then s | t, then the outcome."""
    if N < 1:
        raise SynthError("N must be a positive integer")
    rng = np.random.default_rng(mask64(cfg.seed if seed is None else seed))
    t = (rng.random(N) < cfg.kappa).astype(np.int64)
    s_gs = cfg.q_dist.sample(rng, N)
    s_pb = cfg.q_prime_dist.sample(rng, N)
    S = np.where(t[:, None] == 1, s_gs, s_pb)
    m_vals, eta_vals, o1, o0 = _draw_potentials(rng, cfg, S)
    p = true_propensity(S, cfg)
    return _build_samples(tag, S, t, m_vals, eta_vals, o1, o0, p)


def generate_causal(cfg: SynthConfig, N: int, seed: int | None = None,
                    tag: str = "causal") -> list[SynthSample]:
    """Query first: s ~ kappa Q + (1-kappa) Q', then t ~ Bernoulli(p(s)), then the outcome."""
    if N < 1:
        raise SynthError("N must be a positive integer")
    rng = np.random.default_rng(mask64(cfg.seed if seed is None else seed))
    comp = rng.random(N) < cfg.kappa
    s_gs = cfg.q_dist.sample(rng, N)
    s_pb = cfg.q_prime_dist.sample(rng, N)
    S = np.where(comp[:, None], s_gs, s_pb)
    p = true_propensity(S, cfg)
    t = (rng.random(N) < p).astype(np.int64)
    m_vals, eta_vals, o1, o0 = _draw_potentials(rng, cfg, S)
    return _build_samples(tag, S, t, m_vals, eta_vals, o1, o0, p)


def generate_routing_round(cfg: SynthConfig, n_test: int, n_gs: int, n_pb: int,
                           seed: int) -> RoutingRoundData:
    """Training arms conditioned on their sizes, plus a mixture test set.

    GS training queries come from Q with GS outcomes, PB training queries from
    Q' with PB outcomes (the joint process given the arm counts); the test set
    is drawn from the kappa-mixture and carries GS outcomes.  The PB queries'
    GS potential outcomes are returned separately for oracle baselines.
    """
    if n_test < 1 or n_gs < 1 or n_pb < 0:
        raise SynthError("n_test and n_gs must be positive, n_pb nonnegative")
    rng = np.random.default_rng(mask64(seed))

    S_gs = cfg.q_dist.sample(rng, n_gs)
    _, _, o1_gs, _ = _draw_potentials(rng, cfg, S_gs)
    train_gs = [
        GsSample(Query(id=f"gs-{i:06d}", embedding=S_gs[i]), r=float(o1_gs[i]))
        for i in range(n_gs)
    ]

    train_pb: list[PbSample] = []
    oracle_gs: list[GsSample] = []
    if n_pb > 0:
        S_pb = cfg.q_prime_dist.sample(rng, n_pb)
        _, _, o1_pb, o0_pb = _draw_potentials(rng, cfg, S_pb)
        for i in range(n_pb):
            q = Query(id=f"pb-{i:06d}", embedding=S_pb[i])
            train_pb.append(PbSample(q, y=float(o0_pb[i])))
            oracle_gs.append(GsSample(q, r=float(o1_pb[i])))

    comp = rng.random(n_test) < cfg.kappa
    S_test = np.where(comp[:, None], cfg.q_dist.sample(rng, n_test),
                      cfg.q_prime_dist.sample(rng, n_test))
    _, _, o1_test, _ = _draw_potentials(rng, cfg, S_test)
    test = [
        GsSample(Query(id=f"test-{i:06d}", embedding=S_test[i]), r=float(o1_test[i]))
        for i in range(n_test)
    ]
    return RoutingRoundData(test=test, train_gs=train_gs, train_pb=train_pb,
                            oracle_gs=oracle_gs)


def combined_from_synth(samples: list[SynthSample]) -> list[CombinedSample]:
    return [s.combined for s in samples]


def arms_from_synth(samples: list[SynthSample]) -> tuple[list[GsSample], list[PbSample]]:
    """Observed GS and PB samples implied by the generated mechanism indicators."""
    gs = [GsSample(s.combined.s, r=s.combined.o) for s in samples if s.combined.t == 1]
    pb = [PbSample(s.combined.s, y=s.combined.o) for s in samples if s.combined.t == 0]
    return gs, pb


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return 1.0
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


@dataclass
class EquivalenceReport:
    """Distribution-equivalence diagnostics between two generated datasets."""

    n1: int
    n2: int
    mean_t_1: float
    mean_t_2: float
    mean_t_gap: float
    z_stat: float
    max_bin_gap: float
    n_qualifying_bins: int
    ks_gs_arm: float
    ks_pb_arm: float
    passed_mean_t: bool
    passed_bins: bool
    passed_ks: bool
    bin_table: list[dict] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.passed_mean_t and self.passed_bins and self.passed_ks

    def lines(self) -> list[str]:
        flag = lambda ok: "pass" if ok else "FAIL"
        return [
            f"mean-t gap        {self.mean_t_gap:.6f} (z = {self.z_stat:.3f}, "
            f"threshold {MEAN_T_GAP_MAX}) ... {flag(self.passed_mean_t)}",
            f"binned propensity {self.max_bin_gap:.6f} over {self.n_qualifying_bins} bins "
            f"(threshold {BIN_GAP_MAX}) ... {flag(self.passed_bins)}",
            f"KS per arm        gs {self.ks_gs_arm:.6f} / pb {self.ks_pb_arm:.6f} "
            f"(threshold {KS_MAX}) ... {flag(self.passed_ks)}",
            f"overall           {'pass' if self.passed else 'FAIL'}",
        ]


def _synth_arrays(samples: list[SynthSample]):
    S = np.stack([s.combined.s.embedding for s in samples])
    t = np.array([s.combined.t for s in samples], dtype=np.float64)
    p = np.array([s.p_true for s in samples])
    return S, t, p


def equivalence_diagnostics(d1: list[SynthSample], d2: list[SynthSample],
                            n_bins: int = 20) -> EquivalenceReport:
    """Check that two generated datasets share one law.

    Compares (a) mechanism frequencies, (b) binned empirical E[t | s] against
    the averaged true propensity per bin (both datasets, bins of a fixed 1-D
    projection with at least MIN_BIN_COUNT samples), and (c) per-arm
    Kolmogorov-Smirnov statistics of the projected queries.  The projection is
    the normalized all-ones direction.
    """
    if len(d1) < 1000 or len(d2) < 1000:
        raise SynthError("equivalence diagnostics need at least 1000 samples per dataset")
    if n_bins < 2:
        raise SynthError("n_bins must be at least 2")
    S1, t1, p1 = _synth_arrays(d1)
    S2, t2, p2 = _synth_arrays(d2)
    if S1.shape[1] != S2.shape[1]:
        raise SynthError("datasets have different embedding dimensions")
    u = np.ones(S1.shape[1]) / math.sqrt(S1.shape[1])
    proj1 = S1 @ u
    proj2 = S2 @ u

    gap = abs(t1.mean() - t2.mean())
    pooled = np.concatenate([t1, t2]).mean()
    denom = pooled * (1.0 - pooled) * (1.0 / t1.size + 1.0 / t2.size)
    z = float((t1.mean() - t2.mean()) / math.sqrt(denom)) if denom > 0 else 0.0

    lo = min(proj1.min(), proj2.min())
    hi = max(proj1.max(), proj2.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    max_bin_gap = 0.0
    n_qual = 0
    table = []
    for name, proj, t, p in (("d1", proj1, t1, p1), ("d2", proj2, t2, p2)):
        which = np.clip(np.digitize(proj, edges) - 1, 0, n_bins - 1)
        for b in range(n_bins):
            mask = which == b
            count = int(mask.sum())
            if count == 0:
                continue
            bin_gap = abs(t[mask].mean() - p[mask].mean())
            qualifies = count >= MIN_BIN_COUNT
            table.append({"dataset": name, "bin": b, "count": count,
                          "emp_t": float(t[mask].mean()),
                          "true_p": float(p[mask].mean()),
                          "gap": float(bin_gap), "qualifies": qualifies})
            if qualifies:
                n_qual += 1
                max_bin_gap = max(max_bin_gap, float(bin_gap))

    ks_gs = _ks_statistic(proj1[t1 == 1], proj2[t2 == 1])
    ks_pb = _ks_statistic(proj1[t1 == 0], proj2[t2 == 0])

    return EquivalenceReport(
        n1=len(d1), n2=len(d2),
        mean_t_1=float(t1.mean()), mean_t_2=float(t2.mean()),
        mean_t_gap=float(gap), z_stat=z,
        max_bin_gap=max_bin_gap, n_qualifying_bins=n_qual,
        ks_gs_arm=ks_gs, ks_pb_arm=ks_pb,
        passed_mean_t=bool(gap <= MEAN_T_GAP_MAX),
        passed_bins=bool(max_bin_gap <= BIN_GAP_MAX),
        passed_ks=bool(max(ks_gs, ks_pb) <= KS_MAX),
        bin_table=table,
    )
