"""Command-line entry point.

Subcommands: synth-gen, train, route, sweep, experiment, diag-equivalence.
Exit codes: 0 success, 1 validation error, 2 runtime failure (for
diag-equivalence, 2 also signals a failed equivalence check).  The
METAROUTER_SEED environment variable overrides the config's master seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from ._util import mask64
from .artifacts import ArtifactError, build_bundle, load_bundle, save_bundle
from .config import ConfigError, ExperimentConfig, config_hash, parse_config
from .data import DatasetError, Query, load_dataset
from .harness import HarnessError, fit_round, run_experiment, sweep_router
from .nuisance import NuisanceError
from .regress import SpecError, TREE_BACKEND
from .router import BINARY_COST, RouterError, decide, scale_gs_outcomes
from .synthetic import (
    SynthError,
    equivalence_diagnostics,
    generate_causal,
    generate_joint,
)

log = logging.getLogger("metarouter")

_VALIDATION_ERRORS = (
    ConfigError, DatasetError, SynthError, SpecError, RouterError,
    NuisanceError, ArtifactError, ValueError,
)


def _load_config(path) -> ExperimentConfig:
    cfg = parse_config(path)
    override = os.environ.get("METAROUTER_SEED")
    if override is not None:
        try:
            seed = int(override)
        except ValueError:
            raise ConfigError(f"METAROUTER_SEED={override!r} is not an integer") from None
        log.info("master seed overridden by METAROUTER_SEED=%d", seed)
        cfg = dataclasses.replace(cfg, master_seed=seed)
    return cfg


def _write_jsonl_synth(samples, path, schema):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            c = s.combined
            truth = {"t": c.t, "o1": s.o1_true, "o0": s.o0_true,
                     "m": s.m_true, "eta": s.eta_true, "p": s.p_true}
            if schema == "both":
                rec = {"id": c.s.id, "embedding": c.s.embedding.tolist(),
                       "source": "both", "outcome": s.o1_true,
                       "pb_outcome": s.o0_true, "truth": truth}
            else:
                rec = {"id": c.s.id, "embedding": c.s.embedding.tolist(),
                       "source": "gs" if c.t == 1 else "pb", "outcome": c.o,
                       "truth": truth}
            fh.write(json.dumps(rec) + "\n")


def _cmd_synth_gen(args) -> int:
    cfg = _load_config(args.config)
    if cfg.source_kind != "synthetic":
        raise ConfigError("synth-gen requires a config with a synthetic data source")
    if args.n < 1:
        raise ConfigError(f"--n must be a positive integer, got {args.n}")
    gen = generate_joint if args.process == "joint" else generate_causal
    samples = gen(cfg.synthetic, args.n, seed=cfg.master_seed)
    _write_jsonl_synth(samples, args.out, args.schema)
    log.info("wrote %d %s-process samples to %s", args.n, args.process, args.out)
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    router_id = args.router
    if router_id not in cfg.routers:
        raise ConfigError(f"--router {router_id!r} is not in the configured routers")
    if router_id == "random":
        raise ConfigError("the random baseline has no model to persist")
    fits = fit_round(cfg, round_index=0)
    quality = fits.fitted[router_id]
    cate = None
    if router_id == "meta_r":
        cate = fits.cate_models["r_learner"]
    elif router_id == "meta_dr":
        cate = fits.cate_models["dr_learner"]
    os.makedirs(args.out, exist_ok=True)
    bundle = build_bundle(quality, cate, fits.projection, config_hash(cfg))
    out_path = os.path.join(args.out, f"{router_id}.model.json")
    save_bundle(out_path, bundle)
    log.info("persisted %s artifact to %s (normalization c=%s)",
             router_id, out_path, fits.c)
    return 0


def _load_queries(path) -> list[Query]:
    queries = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if "id" not in raw or "embedding" not in raw:
                raise DatasetError(f"line {lineno}: query records need 'id' and 'embedding'")
            if dim is None:
                dim = len(raw["embedding"])
            elif len(raw["embedding"]) != dim:
                raise DatasetError(
                    f"line {lineno}: embedding dimension {len(raw['embedding'])} != {dim}"
                )
            queries.append(Query(
                id=str(raw["id"]), embedding=raw["embedding"],
                tokens_in=raw.get("tokens_in"),
                tokens_out_p=raw.get("tokens_out_p"),
                tokens_out_a=raw.get("tokens_out_a"),
            ))
    return queries


def _check_hash(bundle, args, cfg=None) -> None:
    if cfg is None:
        return
    expected = config_hash(cfg)
    if bundle.config_hash != expected and not args.force:
        raise ArtifactError(
            "artifact config hash does not match the supplied config "
            "(pass --force to route anyway)"
        )


def _cmd_route(args) -> int:
    bundle = load_bundle(args.model)
    cfg = _load_config(args.config) if args.config else None
    _check_hash(bundle, args, cfg)
    if args.w < 0:
        raise ConfigError(f"--w must be nonnegative, got {args.w}")
    cost = cfg.cost if cfg is not None else BINARY_COST
    queries = _load_queries(args.queries)
    if queries and queries[0].dim != bundle.expected_input_dim:
        raise DatasetError(
            f"queries have dimension {queries[0].dim}, artifact expects "
            f"{bundle.expected_input_dim}"
        )
    X = np.stack([q.embedding for q in queries]) if queries else np.empty((0, 0))
    projected = bundle.project_queries(X) if queries else X
    m_hat = bundle.quality_model.predictor.predict(projected) if queries else []
    with open(args.out, "w", encoding="utf-8") as fh:
        for q, mh in zip(queries, m_hat):
            d = decide(float(mh), args.w, cost, q)
            fh.write(json.dumps({
                "id": q.id, "choice": d.choice,
                "decision_value": d.decision_value, "m_hat": float(mh), "w": d.w,
            }) + "\n")
    log.info("routed %d queries (w=%s) to %s", len(queries), args.w, args.out)
    return 0


def _cmd_sweep(args) -> int:
    bundle = load_bundle(args.model)
    gs, _pb = load_dataset(args.data, schema="mixed")
    if not gs:
        raise DatasetError("sweep requires a dataset with GS outcomes")
    if gs[0].query.dim != bundle.expected_input_dim:
        raise DatasetError(
            f"test queries have dimension {gs[0].query.dim}, artifact expects "
            f"{bundle.expected_input_dim}"
        )
    if bundle.projection is not None:
        from .harness import _project_gs

        gs = _project_gs(gs, bundle.projection)
    norm = bundle.quality_model.normalization
    if norm is not None:
        gs = scale_gs_outcomes(gs, norm.c)
    points = sweep_router(bundle.quality_model, gs, grid_size=args.grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["router_id", "mc_round", "w", "pmur", "te"])
        writer.writerows((p.router_id, 0, p.w, p.pmur, p.te) for p in points)
    log.info("wrote %d curve points to %s", len(points), args.out)
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    out = args.out or cfg.out_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    log.info("running %d round(s), %d router(s), tree backend %s",
             cfg.mc_rounds, len(cfg.routers), TREE_BACKEND)
    table = run_experiment(cfg)
    table.write(out)
    log.info("experiment artifacts written to %s", out)
    return 0


def _cmd_diag_equivalence(args) -> int:
    cfg = _load_config(args.config)
    if cfg.source_kind != "synthetic":
        raise ConfigError("diag-equivalence requires a config with a synthetic data source")
    if args.n < 1000:
        raise ConfigError("--n must be at least 1000 for the diagnostics to be meaningful")
    seeds = np.random.SeedSequence([mask64(cfg.master_seed), 9001]).generate_state(2)
    d1 = generate_joint(cfg.synthetic, args.n, seed=int(seeds[0]))
    d2 = generate_causal(cfg.synthetic, args.n, seed=int(seeds[1]))
    report = equivalence_diagnostics(d1, d2, n_bins=args.bins)
    for line in report.lines():
        print(line)
    if args.out:
        payload = {k: v for k, v in dataclasses.asdict(report).items() if k != "bin_table"}
        payload["passed"] = report.passed
        payload["bin_table"] = report.bin_table
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if report.passed else 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metarouter",
        description="Train and evaluate LLM routers on combined GS/PB evaluations.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="emit a synthetic JSONL dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--process", choices=("joint", "causal"), default="joint")
    p.add_argument("--schema", choices=("arm", "both"), default="arm",
                   help="'arm' tags each record gs/pb by its drawn mechanism; "
                        "'both' emits pool records with both outcomes")
    p.set_defaults(fn=_cmd_synth_gen)

    p = sub.add_parser("train", help="fit the shift and quality-gain models, persist them")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--router", default="meta_r",
                   help="which configured router to persist (default meta_r)")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("route", help="apply a persisted router to queries")
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--w", type=float, required=True)
    p.add_argument("--config", default=None,
                   help="optional config; its hash must match the artifact")
    p.add_argument("--force", action="store_true",
                   help="route even if the config hash mismatches")
    p.set_defaults(fn=_cmd_route)

    p = sub.add_parser("sweep", help="emit curves.csv for one persisted router")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=20)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("experiment", help="run the full Monte-Carlo evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None,
                   help="output directory (falls back to the config's out_dir)")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("diag-equivalence",
                       help="check the two generative processes produce one law")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_diag_equivalence)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; those are validation failures here
        return 0 if exc.code == 0 else 1
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as exc:
        log.error("%s", exc)
        return 1
    except HarnessError as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        log.exception("unexpected failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
