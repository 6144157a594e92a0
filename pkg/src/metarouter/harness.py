"""Evaluation protocol: efficiency metrics, usage sweeps and Monte-Carlo runs.

For each Monte-Carlo round the harness splits (or generates) the data, fits
every configured router, sweeps the trade-off weight over per-router
quantile grids and records (w, PMUR, TE) operating points.  Curves are
aggregated as medians on a fixed grid of PMUR buckets, and efficiency gain is
measured per test sample against the random-assignment baseline.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._util import mask64
from .cate import CateModel, fit_dr_learner, fit_r_learner
from .config import ExperimentConfig, config_hash
from .data import (
    GsSample,
    SplitSpec,
    load_dataset,
    make_combined_dataset,
    split_dataset,
    stack_embeddings,
)
from .nuisance import estimate_nuisances
from .regress import Projection, TREE_BACKEND, fit_projection, project
from .router import (
    M_P,
    BINARY_COST,
    CostModel,
    NormalizationMethod,
    QualityGainModel,
    RouterError,
    compute_normalization,
    decide,
    fit_baseline_router,
    fit_meta_router,
    scale_gs_outcomes,
)
from .synthetic import RoutingRoundData, generate_routing_round

__all__ = [
    "HarnessError",
    "CurvePoint",
    "ResultsTable",
    "RoundFits",
    "total_efficiency",
    "efficiency_gain",
    "pmur",
    "default_w_grid",
    "sweep_router",
    "random_router_curve",
    "aggregate_curves",
    "fit_round",
    "run_experiment",
    "PMUR_BUCKETS",
]

# fixed-width 0.05 buckets on which router curves are compared
PMUR_BUCKETS = np.arange(21) / 20.0


class HarnessError(RuntimeError):
    """Experiment-level failure (round errors beyond the configured budget)."""


@dataclass(frozen=True)
class CurvePoint:
    """One operating point: trade-off weight (or assignment probability), usage, efficiency."""

    w: float
    pmur: float
    te: float
    router_id: str


def total_efficiency(assignments, test: list[GsSample]) -> float:
    """Sum of realized GS gains over the test queries routed to the premium model."""
    if len(assignments) != len(test):
        raise HarnessError(
            f"{len(assignments)} assignments for {len(test)} test samples"
        )
    r = np.array([s.r for s in test])
    sel = np.array([a == M_P for a in assignments], dtype=bool)
    return float(np.sum(r[sel]))


def efficiency_gain(te_router: float, te_random: float, n_test: int) -> float:
    """Per-sample improvement of a router's TE over the random baseline."""
    if n_test <= 0:
        raise HarnessError("n_test must be positive")
    return (te_router - te_random) / n_test


def pmur(assignments) -> float:
    """Fraction of queries assigned to the premium model."""
    if len(assignments) == 0:
        raise HarnessError("PMUR of an empty assignment list is undefined")
    return sum(1 for a in assignments if a == M_P) / len(assignments)


def default_w_grid(m_hat: np.ndarray, grid_size: int = 20) -> np.ndarray:
    """Quantile grid of the predicted gains; spans PMUR 1 down to 0.

    The level-0 point is nudged one ulp below the minimum prediction so the
    strict decision rule routes every query to the premium model there.
    """
    levels = np.arange(grid_size + 1) / grid_size
    grid = np.quantile(np.asarray(m_hat, dtype=np.float64), levels)
    grid[0] = np.nextafter(grid[0], -np.inf)
    return grid


def sweep_router(
    model: QualityGainModel,
    test: list[GsSample],
    w_grid: np.ndarray | None = None,
    cost: CostModel = BINARY_COST,
    grid_size: int = 20,
) -> list[CurvePoint]:
    """Evaluate one router over a weight grid (default: its own prediction quantiles)."""
    if not test:
        raise HarnessError("cannot sweep a router over an empty test set")
    m_hat = model.predictor.predict(stack_embeddings(test))
    if w_grid is None:
        w_grid = default_w_grid(m_hat, grid_size)
    else:
        w_grid = np.asarray(w_grid, dtype=np.float64)
        if w_grid.size == 0 or (np.diff(w_grid) < 0).any():
            raise HarnessError("w_grid must be nonempty and sorted ascending")
    points = []
    for w in w_grid:
        choices = [decide(float(mh), float(w), cost, s.query).choice
                   for mh, s in zip(m_hat, test)]
        points.append(CurvePoint(
            w=float(w), pmur=pmur(choices),
            te=total_efficiency(choices, test),
            router_id=model.provenance,
        ))
    return points


def random_router_curve(
    test: list[GsSample],
    probs,
    reps: int = 200,
    seed: int = 0,
) -> list[CurvePoint]:
    """Random-assignment baseline: average TE over repeated Bernoulli assignments."""
    if not test:
        raise HarnessError("cannot evaluate the random router on an empty test set")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0 or (np.diff(probs) < 0).any():
        raise HarnessError("probs must be nonempty and sorted ascending")
    if (probs < 0).any() or (probs > 1).any():
        raise HarnessError("assignment probabilities must lie in [0, 1]")
    if reps < 1:
        raise HarnessError("reps must be positive")
    r = np.array([s.r for s in test])
    n = r.shape[0]
    rng = np.random.default_rng(mask64(seed))
    points = []
    for prob in probs:
        assign = rng.random((reps, n)) < prob
        te_reps = np.array([float(np.sum(r[row])) for row in assign])
        usage = assign.mean(axis=1)
        # the common value avoids round-off when every repetition agrees (prob 0 or 1)
        te = float(te_reps[0]) if np.all(te_reps == te_reps[0]) else float(te_reps.mean())
        um = float(usage[0]) if np.all(usage == usage[0]) else float(usage.mean())
        points.append(CurvePoint(w=float(prob), pmur=um, te=te, router_id="random"))
    return points


@dataclass
class ResultsTable:
    """Raw per-round curves plus bucket-median aggregates and run metadata."""

    curves: list[tuple] = field(default_factory=list)  # (router_id, round, w, pmur, te)
    aggregates: list[tuple] = field(default_factory=list)  # (router_id, bucket, med_te, med_eg)
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "curves.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["router_id", "mc_round", "w", "pmur", "te"])
            writer.writerows(self.curves)
        with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["router_id", "pmur_bucket", "median_te", "median_eg"])
            writer.writerows(self.aggregates)
        with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _interp_on_buckets(points: list[tuple], buckets: np.ndarray) -> np.ndarray:
    """Linear interpolation of a (pmur, te) curve onto the bucket grid."""
    pm = np.array([p[0] for p in points])
    te = np.array([p[1] for p in points])
    order = np.argsort(pm, kind="stable")
    pm, te = pm[order], te[order]
    # average duplicated pmur values so the curve is a function of pmur
    uniq, inverse = np.unique(pm, return_inverse=True)
    if uniq.shape[0] != pm.shape[0]:
        sums = np.zeros_like(uniq)
        counts = np.zeros_like(uniq)
        np.add.at(sums, inverse, te)
        np.add.at(counts, inverse, 1.0)
        pm, te = uniq, sums / counts
    return np.interp(buckets, pm, te)


def aggregate_curves(
    curve_rows: list[tuple],
    n_test: int,
    routers: tuple[str, ...],
    buckets: np.ndarray = PMUR_BUCKETS,
) -> list[tuple]:
    """Bucket-median TE per router plus efficiency gain against the random router.

    ``curve_rows`` are (router_id, mc_round, w, pmur, te) records.  Medians
    are taken across rounds at each bucket; the gain divides the median-TE
    difference to the random router by the test-set size.  Round order does
    not matter.
    """
    per_round: dict[str, dict[int, list[tuple]]] = {}
    for router_id, mc_round, _w, pm, te in curve_rows:
        per_round.setdefault(router_id, {}).setdefault(mc_round, []).append((pm, te))
    med_te: dict[str, np.ndarray] = {}
    for router_id, rounds in per_round.items():
        grid = np.stack([
            _interp_on_buckets(rounds[k], buckets) for k in sorted(rounds)
        ])
        med_te[router_id] = np.median(grid, axis=0)
    if "random" not in med_te:
        raise HarnessError("aggregation requires the random baseline curve")
    rows = []
    for router_id in routers:
        if router_id not in med_te:
            continue
        for b, bucket in enumerate(buckets):
            eg = (med_te[router_id][b] - med_te["random"][b]) / n_test
            rows.append((router_id, float(bucket), float(med_te[router_id][b]), float(eg)))
    return rows


def _round_seeds(master_seed: int, round_index: int) -> dict[str, int]:
    state = np.random.SeedSequence([mask64(master_seed), round_index]).generate_state(4)
    names = ("data", "folds", "random_router", "spare")
    return {name: int(v) for name, v in zip(names, state)}


def _project_gs(samples, proj):
    return [GsSample(query=_projected_query(s.query, proj), r=s.r) for s in samples]


def _projected_query(q, proj):
    from .data import Query

    emb = project(proj, q.embedding[None, :])[0]
    return Query(id=q.id, embedding=emb, tokens_in=q.tokens_in,
                 tokens_out_p=q.tokens_out_p, tokens_out_a=q.tokens_out_a)


def _acquire_round_data(cfg: ExperimentConfig, seeds) -> RoutingRoundData:
    if cfg.source_kind == "synthetic":
        n_pb = cfg.pool_size - cfg.n_test - cfg.n_gs_train
        return generate_routing_round(
            cfg.synthetic, cfg.n_test, cfg.n_gs_train, n_pb, seeds["data"]
        )
    gs_pool, pb_pool = load_dataset(cfg.dataset_path, schema="mixed")
    spec = SplitSpec(n_test=cfg.n_test, n_gs_train=cfg.n_gs_train, seed=seeds["data"])
    test, train_gs, train_pb = split_dataset(gs_pool, pb_pool, spec)
    by_id = {g.query.id: g for g in gs_pool}
    oracle_gs = [by_id[p.query.id] for p in train_pb if p.query.id in by_id]
    return RoutingRoundData(test=test, train_gs=train_gs, train_pb=train_pb,
                            oracle_gs=oracle_gs)


@dataclass
class RoundFits:
    """Everything one round fits: the (projected, normalized) data and the routers."""

    test: list[GsSample]
    train_gs: list[GsSample]
    train_pb: list
    fitted: dict[str, QualityGainModel]
    cate_models: dict[str, CateModel]
    projection: Projection | None
    normalization: NormalizationMethod | None
    seeds: dict[str, int]
    c: float


def fit_round(cfg: ExperimentConfig, round_index: int) -> RoundFits:
    """Acquire one round of data and fit every configured router on it."""
    seeds = _round_seeds(cfg.master_seed, round_index)
    data = _acquire_round_data(cfg, seeds)
    test, train_gs, train_pb = data.test, data.train_gs, data.train_pb
    oracle_gs = data.oracle_gs

    proj = None
    if cfg.pca_dim is not None and cfg.pca_dim < train_gs[0].query.dim:
        X_train = np.concatenate([stack_embeddings(train_gs)] +
                                 ([stack_embeddings(train_pb)] if train_pb else []))
        proj = fit_projection(X_train, cfg.pca_dim)
        train_gs = _project_gs(train_gs, proj)
        test = _project_gs(test, proj)
        oracle_gs = _project_gs(oracle_gs, proj)
        from .data import PbSample

        train_pb = [PbSample(query=_projected_query(p.query, proj), y=p.y)
                    for p in train_pb]

    norm_record = None
    c = 1.0
    if cfg.normalization is not None and train_pb:
        c = compute_normalization(
            [s.r for s in train_gs], [p.y for p in train_pb], cfg.normalization
        )
        norm_record = NormalizationMethod(kind=cfg.normalization, c=c)
        train_gs = scale_gs_outcomes(train_gs, c)
        oracle_gs = scale_gs_outcomes(oracle_gs, c)
        test = scale_gs_outcomes(test, c)

    needs_cate = any(r in cfg.routers for r in ("meta_r", "meta_dr"))
    cate_models: dict[str, CateModel] = {}
    if needs_cate:
        combined = make_combined_dataset(train_gs, train_pb)
        nu = estimate_nuisances(
            combined, cfg.spec_propensity, cfg.spec_outcome,
            K=cfg.n_folds, clip=cfg.clip, seed=seeds["folds"],
            composed_gamma=cfg.composed_gamma,
        )
        if "r_learner" in cfg.learners:
            cate_models["r_learner"] = fit_r_learner(
                combined, nu, cfg.spec_shift, resid_floor=cfg.resid_floor
            )
        if "dr_learner" in cfg.learners:
            cate_models["dr_learner"] = fit_dr_learner(combined, nu, cfg.spec_shift)

    fitted: dict[str, QualityGainModel] = {}
    for router_id in cfg.routers:
        if router_id == "random":
            continue
        if router_id == "meta_r":
            fitted[router_id] = fit_meta_router(
                train_gs, train_pb, cate_models["r_learner"], cfg.spec_quality,
                normalization=norm_record,
            )
        elif router_id == "meta_dr":
            fitted[router_id] = fit_meta_router(
                train_gs, train_pb, cate_models["dr_learner"], cfg.spec_quality,
                normalization=norm_record,
            )
        elif router_id == "oracle_full_gs":
            if train_pb and len(oracle_gs) != len(train_pb):
                raise RouterError(
                    "oracle_full_gs requires GS outcomes for every PB training query"
                )
            fitted[router_id] = fit_baseline_router(
                "oracle_full_gs", cfg.spec_quality, train_gs=train_gs,
                oracle_gs=oracle_gs, normalization=norm_record,
            )
        else:
            fitted[router_id] = fit_baseline_router(
                router_id, cfg.spec_quality, train_gs=train_gs, train_pb=train_pb,
                normalization=norm_record,
            )
    return RoundFits(test=test, train_gs=train_gs, train_pb=train_pb, fitted=fitted,
                     cate_models=cate_models, projection=proj,
                     normalization=norm_record, seeds=seeds, c=c)


def _run_round(cfg: ExperimentConfig, round_index: int):
    fits = fit_round(cfg, round_index)
    rows = []
    for router_id in cfg.routers:
        if router_id == "random":
            probs = np.arange(cfg.grid_size + 1) / cfg.grid_size
            points = random_router_curve(fits.test, probs, reps=cfg.random_reps,
                                         seed=fits.seeds["random_router"])
        else:
            points = sweep_router(fits.fitted[router_id], fits.test, cost=cfg.cost,
                                  grid_size=cfg.grid_size)
        rows.extend((p.router_id, round_index, p.w, p.pmur, p.te) for p in points)
    meta = {"round": round_index, "normalization_c": fits.c,
            "n_pb_train": len(fits.train_pb),
            "pca_applied": fits.projection is not None,
            "seeds": fits.seeds}
    return rows, meta


def _round_task(args):
    cfg, round_index = args
    try:
        rows, meta = _run_round(cfg, round_index)
        return ("ok", round_index, rows, meta)
    except Exception as exc:  # noqa: BLE001 - captured into the failure budget
        return ("error", round_index, f"{type(exc).__name__}: {exc}", None)


def run_experiment(cfg: ExperimentConfig) -> ResultsTable:
    """Run all Monte-Carlo rounds and aggregate bucket medians.

    Fully reproducible from (config, master seed); round-level parallelism
    (``n_jobs > 1``) does not change any output because every round derives
    its seeds from the master seed and its own index, and aggregation
    consumes rounds in index order.
    """
    tasks = [(cfg, i) for i in range(cfg.mc_rounds)]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            outcomes = list(pool.map(_round_task, tasks))
    else:
        outcomes = [_round_task(t) for t in tasks]

    curve_rows: list[tuple] = []
    round_meta = []
    failures = []
    for status, round_index, payload, meta in outcomes:
        if status == "ok":
            curve_rows.extend(payload)
            round_meta.append(meta)
        else:
            failures.append({"round": round_index, "error": payload})
    if len(failures) > cfg.round_failure_budget:
        detail = "; ".join(f"round {f['round']}: {f['error']}" for f in failures)
        raise HarnessError(
            f"{len(failures)} round(s) failed, budget is {cfg.round_failure_budget}: {detail}"
        )
    if not round_meta:
        raise HarnessError("no rounds completed; nothing to aggregate")

    aggregates = aggregate_curves(curve_rows, cfg.n_test, cfg.routers)
    metadata = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "tree_backend": TREE_BACKEND,
        "pmur_bucket_width": 0.05,
        "w_grid": "per-router prediction quantiles, level 0 nudged below the minimum",
        "rounds_completed": len(round_meta),
        "round_failures": failures,
        "rounds": round_meta,
    }
    return ResultsTable(curves=curve_rows, aggregates=aggregates, metadata=metadata)
