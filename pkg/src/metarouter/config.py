"""Experiment configuration: JSON parsing, validation, defaults and canonical form.

The config file is a single JSON object; every key is optional except
``data`` and ``seed``.  Unknown keys are rejected with their dotted path, and
the resolved (fully defaulted) configuration is what gets hashed and echoed
into artifacts and result metadata.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .regress import RegressorSpec, SpecError
from .router import CostModel, RouterError, NORMALIZATION_KINDS
from .synthetic import SynthConfig, SynthError

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "config_from_dict",
           "config_hash", "ALL_ROUTERS", "LEARNER_CHOICES"]

ALL_ROUTERS = ("oracle_full_gs", "pooled", "gs_only", "meta_r", "meta_dr", "random")
LEARNER_CHOICES = ("r_learner", "dr_learner")


class ConfigError(ValueError):
    """Invalid experiment configuration; messages carry the dotted key path."""


@dataclass(frozen=True)
class ExperimentConfig:
    source_kind: str
    synthetic: SynthConfig | None
    dataset_path: str | None
    pool_size: int | None
    n_test: int
    n_gs_train: int
    pca_dim: int | None
    normalization: str | None
    spec_quality: RegressorSpec
    spec_shift: RegressorSpec
    spec_propensity: RegressorSpec
    spec_outcome: RegressorSpec
    n_folds: int
    clip: float
    composed_gamma: bool
    resid_floor: float
    learners: tuple[str, ...]
    routers: tuple[str, ...]
    grid_size: int
    random_reps: int
    cost: CostModel
    mc_rounds: int
    master_seed: int
    n_jobs: int
    round_failure_budget: int
    out_dir: str | None = None

    def to_dict(self) -> dict:
        data: dict = {"kind": self.source_kind}
        if self.source_kind == "synthetic":
            data["synthetic"] = self.synthetic.to_dict()
            data["pool_size"] = self.pool_size
        else:
            data["path"] = self.dataset_path
        return {
            "data": data,
            "split": {"n_test": self.n_test, "n_gs_train": self.n_gs_train},
            "pca_dim": self.pca_dim,
            "normalization": self.normalization,
            "regressors": {
                "quality": self.spec_quality.to_dict(),
                "shift": self.spec_shift.to_dict(),
                "propensity": self.spec_propensity.to_dict(),
                "outcome": self.spec_outcome.to_dict(),
            },
            "crossfit": {"n_folds": self.n_folds, "clip": self.clip,
                         "composed_gamma": self.composed_gamma},
            "resid_floor": self.resid_floor,
            "learners": list(self.learners),
            "routers": list(self.routers),
            "sweep": {"grid_size": self.grid_size, "random_reps": self.random_reps},
            "cost": self.cost.to_dict(),
            "rounds": self.mc_rounds,
            "seed": self.master_seed,
            "n_jobs": self.n_jobs,
            "round_failure_budget": self.round_failure_budget,
            "out_dir": self.out_dir,
        }


def _expect(raw: dict, path: str, known: set[str]):
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _get_int(raw, key, path, default=None, minimum=None):
    value = raw.get(key, default)
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {value}")
    return value


def _parse_data(raw) -> tuple[str, SynthConfig | None, str | None, int | None]:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("data: expected an object with a 'kind' field")
    kind = raw["kind"]
    if kind == "synthetic":
        _expect(raw, "data", {"kind", "synthetic", "pool_size"})
        if "synthetic" not in raw:
            raise ConfigError("data.synthetic: required for a synthetic source")
        try:
            synth = SynthConfig.from_dict(raw["synthetic"])
        except SynthError as exc:
            path = "data.synthetic" + (f".{exc.field}" if exc.field else "")
            raise ConfigError(f"{path}: {exc}") from exc
        pool = _get_int(raw, "pool_size", "data", minimum=2)
        if pool is None:
            raise ConfigError("data.pool_size: required for a synthetic source")
        return "synthetic", synth, None, pool
    if kind == "dataset":
        _expect(raw, "data", {"kind", "path"})
        if not raw.get("path"):
            raise ConfigError("data.path: required for a dataset source")
        return "dataset", None, str(raw["path"]), None
    raise ConfigError(f"data.kind: unknown source kind {kind!r}")


def _parse_spec(raw, path) -> RegressorSpec:
    try:
        return RegressorSpec.from_dict(raw)
    except (SpecError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _expect(raw, "config", {
        "data", "split", "pca_dim", "normalization", "regressors", "crossfit",
        "resid_floor", "learners", "routers", "sweep", "cost", "rounds", "seed",
        "n_jobs", "round_failure_budget", "out_dir",
    })
    if "data" not in raw:
        raise ConfigError("data: required")
    if "seed" not in raw:
        raise ConfigError("seed: required")
    source_kind, synth, path, pool = _parse_data(raw["data"])

    split = raw.get("split", {})
    if not isinstance(split, dict):
        raise ConfigError("split: expected an object")
    _expect(split, "split", {"n_test", "n_gs_train"})
    n_test = _get_int(split, "n_test", "split", default=500, minimum=1)
    n_gs = _get_int(split, "n_gs_train", "split", default=100, minimum=1)
    if pool is not None and n_test + n_gs > pool:
        raise ConfigError(
            f"data.pool_size: {pool} cannot supply n_test={n_test} plus n_gs_train={n_gs}"
        )

    pca_dim = _get_int(raw, "pca_dim", "config", default=None, minimum=1)

    normalization = raw.get("normalization", "variance")
    if normalization is not None and normalization not in NORMALIZATION_KINDS:
        raise ConfigError(f"normalization: unknown kind {normalization!r}")

    regs = raw.get("regressors", {})
    if not isinstance(regs, dict):
        raise ConfigError("regressors: expected an object")
    _expect(regs, "regressors", {"quality", "shift", "propensity", "outcome"})
    default_spec = {"kind": "tree_ensemble"}
    spec_quality = _parse_spec(regs.get("quality", default_spec), "regressors.quality")
    spec_shift = _parse_spec(regs.get("shift", default_spec), "regressors.shift")
    spec_prop = _parse_spec(regs.get("propensity", default_spec), "regressors.propensity")
    spec_out = _parse_spec(regs.get("outcome", default_spec), "regressors.outcome")

    cf = raw.get("crossfit", {})
    if not isinstance(cf, dict):
        raise ConfigError("crossfit: expected an object")
    _expect(cf, "crossfit", {"n_folds", "clip", "composed_gamma"})
    n_folds = _get_int(cf, "n_folds", "crossfit", default=5, minimum=1)
    clip = cf.get("clip", 0.01)
    if not isinstance(clip, (int, float)) or not 0.0 < clip < 0.5:
        raise ConfigError(f"crossfit.clip: must lie strictly inside (0, 0.5), got {clip!r}")
    composed_gamma = cf.get("composed_gamma", False)
    if not isinstance(composed_gamma, bool):
        raise ConfigError("crossfit.composed_gamma: expected a boolean")

    resid_floor = raw.get("resid_floor", 1e-6)
    if not isinstance(resid_floor, (int, float)) or resid_floor <= 0:
        raise ConfigError(f"resid_floor: must be a positive real, got {resid_floor!r}")

    learners = tuple(raw.get("learners", list(LEARNER_CHOICES)))
    for item in learners:
        if item not in LEARNER_CHOICES:
            raise ConfigError(f"learners: unknown learner {item!r}")

    routers = tuple(raw.get("routers", list(ALL_ROUTERS)))
    for item in routers:
        if item not in ALL_ROUTERS:
            raise ConfigError(f"routers: unknown router {item!r}")
    if "meta_r" in routers and "r_learner" not in learners:
        raise ConfigError("routers: meta_r requires the r_learner in learners")
    if "meta_dr" in routers and "dr_learner" not in learners:
        raise ConfigError("routers: meta_dr requires the dr_learner in learners")
    if "random" not in routers:
        raise ConfigError("routers: the random baseline is required for efficiency gains")

    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected an object")
    _expect(sweep, "sweep", {"grid_size", "random_reps"})
    grid_size = _get_int(sweep, "grid_size", "sweep", default=20, minimum=1)
    random_reps = _get_int(sweep, "random_reps", "sweep", default=200, minimum=1)

    try:
        cost = CostModel.from_dict(raw.get("cost", {"kind": "binary"}))
    except (RouterError, KeyError, TypeError) as exc:
        raise ConfigError(f"cost: {exc}") from exc

    rounds = _get_int(raw, "rounds", "config", default=1, minimum=1)
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    n_jobs = _get_int(raw, "n_jobs", "config", default=1, minimum=1)
    budget = _get_int(raw, "round_failure_budget", "config", default=0, minimum=0)
    out_dir = raw.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"out_dir: expected a string path, got {out_dir!r}")

    return ExperimentConfig(
        source_kind=source_kind, synthetic=synth, dataset_path=path, pool_size=pool,
        n_test=n_test, n_gs_train=n_gs, pca_dim=pca_dim, normalization=normalization,
        spec_quality=spec_quality, spec_shift=spec_shift,
        spec_propensity=spec_prop, spec_outcome=spec_out,
        n_folds=n_folds, clip=float(clip), composed_gamma=composed_gamma,
        resid_floor=float(resid_floor), learners=learners, routers=routers,
        grid_size=grid_size, random_reps=random_reps, cost=cost,
        mc_rounds=rounds, master_seed=seed, n_jobs=n_jobs, round_failure_budget=budget,
        out_dir=out_dir,
    )


def parse_config(path) -> ExperimentConfig:
    """Load, validate and default-fill an experiment config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable hash of the resolved configuration (ties artifacts to their config)."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
