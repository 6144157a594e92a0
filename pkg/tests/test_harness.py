import numpy as np
import pytest

from metarouter.config import config_from_dict
from metarouter.harness import (
    HarnessError,
    PMUR_BUCKETS,
    aggregate_curves,
    default_w_grid,
    efficiency_gain,
    pmur,
    random_router_curve,
    run_experiment,
    sweep_router,
    total_efficiency,
)
from metarouter.regress import RegressorSpec
from metarouter.router import M_A, M_P, fit_baseline_router

from util import gs


def linear_pool_config(rounds=1, seed=0, n_jobs=1, delta=0.0, kappa=0.5):
    """Small synthetic experiment config used across harness tests."""
    return config_from_dict({
        "data": {
            "kind": "synthetic",
            "pool_size": 700,
            "synthetic": {
                "kappa": kappa, "dim": 2,
                "q_dist": {"mean": 0.0, "var": 1.0},
                "q_prime_dist": {"mean": 0.0, "var": 1.0},
                "m": {"kind": "linear", "coefs": [0.5, -0.3], "intercept": 0.0},
                "eta": {"kind": "linear", "coefs": [0.5, -0.3], "intercept": -delta},
                "noise_gs": {"kind": "gaussian", "sigma": 0.1},
                "noise_pb": {"kind": "gaussian", "sigma": 0.1},
                "seed": 0,
            },
        },
        "split": {"n_test": 200, "n_gs_train": 100},
        "regressors": {
            "quality": {"kind": "ridge", "lam": 0.001},
            "shift": {"kind": "ridge", "lam": 0.001},
            "propensity": {"kind": "ridge", "lam": 0.001},
            "outcome": {"kind": "ridge", "lam": 0.001},
        },
        "sweep": {"grid_size": 10, "random_reps": 50},
        "rounds": rounds,
        "seed": seed,
        "n_jobs": n_jobs,
    })


def simple_test_set(rng=None, n=40):
    rng = rng or np.random.default_rng(0)
    return [gs(i, rng.standard_normal(2), r=float(rng.standard_normal())) for i in range(n)]


class TestTotalEfficiency:
    def test_all_alternative_is_zero(self):
        test = simple_test_set()
        assert total_efficiency([M_A] * len(test), test) == 0.0

    def test_hand_sum(self):
        test = [gs(0, [0.0], r=0.5), gs(1, [0.0], r=-0.2), gs(2, [0.0], r=0.3)]
        assert total_efficiency([M_P, M_P, M_A], test) == 0.3

    def test_all_premium_is_full_sum(self):
        test = simple_test_set()
        expected = float(np.sum([s.r for s in test]))
        assert total_efficiency([M_P] * len(test), test) == expected

    def test_length_mismatch(self):
        with pytest.raises(HarnessError):
            total_efficiency([M_P], simple_test_set())


class TestEfficiencyGain:
    def test_equal_te_is_zero(self):
        assert efficiency_gain(0.7, 0.7, 500) == 0.0

    def test_hand_arithmetic(self):
        assert efficiency_gain(0.3, 0.1, 500) == (0.3 - 0.1) / 500
        assert efficiency_gain(0.3, 0.1, 500) == pytest.approx(0.0004)

    def test_n_test_validation(self):
        with pytest.raises(HarnessError):
            efficiency_gain(1.0, 0.0, 0)


class TestPmur:
    def test_extremes(self):
        assert pmur([M_P, M_P]) == 1.0
        assert pmur([M_A, M_A, M_A]) == 0.0

    def test_counting(self):
        assert pmur([M_P, M_A, M_A, M_A, M_P, M_A, M_A, M_A]) == 0.25

    def test_empty_rejected(self):
        with pytest.raises(HarnessError):
            pmur([])


class TestSweepRouter:
    def _model(self, test):
        return fit_baseline_router("gs_only", RegressorSpec.knn(k=1), train_gs=test)

    def test_extreme_weights(self):
        test = simple_test_set()
        model = self._model(test)
        points = sweep_router(model, test, w_grid=np.array([-1e18, 1e18]))
        assert points[0].pmur == 1.0
        assert points[0].te == total_efficiency([M_P] * len(test), test)
        assert points[-1].pmur == 0.0 and points[-1].te == 0.0

    def test_negative_infinity_weight_matches_always_premium(self):
        test = simple_test_set()
        points = sweep_router(self._model(test), test, w_grid=np.array([-np.inf]))
        assert points[0].pmur == 1.0
        always_premium = total_efficiency([M_P] * len(test), test)
        random_full = random_router_curve(test, [1.0], reps=5, seed=0)[0]
        assert points[0].te == always_premium == random_full.te

    def test_default_grid_spans_full_usage_range(self):
        test = simple_test_set()
        points = sweep_router(self._model(test), test, grid_size=20)
        assert len(points) == 21
        assert points[0].pmur == 1.0
        assert points[-1].pmur == 0.0

    def test_pmur_nonincreasing_exactly(self):
        rng = np.random.default_rng(1)
        test = simple_test_set(rng, n=100)
        points = sweep_router(self._model(test), test, grid_size=20)
        usage = [p.pmur for p in points]
        assert all(a >= b for a, b in zip(usage, usage[1:]))

    def test_unsorted_grid_rejected(self):
        test = simple_test_set()
        with pytest.raises(HarnessError):
            sweep_router(self._model(test), test, w_grid=np.array([1.0, 0.0]))


class TestDefaultWGrid:
    def test_quantile_count_and_order(self):
        rng = np.random.default_rng(2)
        grid = default_w_grid(rng.standard_normal(500), 20)
        assert grid.shape == (21,)
        assert (np.diff(grid) >= 0).all()

    def test_level_zero_sits_below_min(self):
        m_hat = np.array([0.3, 0.5, 0.9])
        grid = default_w_grid(m_hat, 2)
        assert grid[0] < 0.3
        assert grid[-1] == 0.9


class TestRandomRouterCurve:
    def test_degenerate_probabilities_exact(self):
        test = simple_test_set()
        points = random_router_curve(test, [0.0, 1.0], reps=7, seed=3)
        assert points[0].te == 0.0 and points[0].pmur == 0.0
        assert points[1].te == total_efficiency([M_P] * len(test), test)
        assert points[1].pmur == 1.0

    def test_half_probability_concentration(self):
        rng = np.random.default_rng(4)
        test = simple_test_set(rng, n=60)
        r = np.array([s.r for s in test])
        reps = 1000
        points = random_router_curve(test, [0.5], reps=reps, seed=5)
        sigma = 0.5 * np.sqrt(np.sum(r**2)) / np.sqrt(reps)
        assert abs(points[0].te - 0.5 * r.sum()) <= 3 * sigma

    def test_random_router_self_gain_is_zero(self):
        test = simple_test_set()
        points = random_router_curve(test, [0.0, 0.25, 0.5, 1.0], reps=20, seed=6)
        for p in points:
            assert efficiency_gain(p.te, p.te, len(test)) == 0.0

    def test_validation(self):
        test = simple_test_set()
        with pytest.raises(HarnessError):
            random_router_curve(test, [0.5, 0.2], reps=3, seed=0)
        with pytest.raises(HarnessError):
            random_router_curve(test, [1.5], reps=3, seed=0)


class TestAggregation:
    def _rows(self, order):
        rows = []
        for rnd in order:
            offset = float(rnd)
            rows.extend([
                ("gs_only", rnd, 0.0, 1.0, 10.0 + offset),
                ("gs_only", rnd, 1.0, 0.5, 6.0 + offset),
                ("gs_only", rnd, 2.0, 0.0, 0.0),
                ("random", rnd, 0.0, 1.0, 8.0 + offset),
                ("random", rnd, 1.0, 0.5, 4.0 + offset),
                ("random", rnd, 2.0, 0.0, 0.0),
            ])
        return rows

    def test_round_order_invariance(self):
        a = aggregate_curves(self._rows([0, 1, 2]), 100, ("gs_only", "random"))
        b = aggregate_curves(self._rows([2, 0, 1]), 100, ("gs_only", "random"))
        assert a == b

    def test_median_and_gain_values(self):
        rows = aggregate_curves(self._rows([0, 1, 2]), 100, ("gs_only", "random"))
        by_key = {(r[0], r[1]): r for r in rows}
        med_te = by_key[("gs_only", 0.5)][2]
        assert med_te == 7.0  # median of 6, 7, 8
        assert by_key[("gs_only", 0.5)][3] == (7.0 - 5.0) / 100

    def test_interpolation_between_points(self):
        rows = [("gs_only", 0, 0.0, 1.0, 10.0), ("gs_only", 0, 2.0, 0.0, 0.0),
                ("random", 0, 0.0, 1.0, 0.0), ("random", 0, 2.0, 0.0, 0.0)]
        agg = aggregate_curves(rows, 10, ("gs_only", "random"))
        by_key = {(r[0], r[1]): r for r in agg}
        assert by_key[("gs_only", 0.5)][2] == pytest.approx(5.0)

    def test_missing_random_baseline_rejected(self):
        with pytest.raises(HarnessError, match="random"):
            aggregate_curves([("gs_only", 0, 0.0, 1.0, 1.0)], 10, ("gs_only",))


class TestRunExperiment:
    def test_deterministic_serial_rerun(self):
        cfg = linear_pool_config(rounds=2, seed=11)
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.curves == b.curves
        assert a.aggregates == b.aggregates

    def test_parallel_equals_serial(self):
        serial = run_experiment(linear_pool_config(rounds=3, seed=12, n_jobs=1))
        parallel = run_experiment(linear_pool_config(rounds=3, seed=12, n_jobs=2))
        assert serial.curves == parallel.curves
        assert serial.aggregates == parallel.aggregates

    def test_no_bias_degenerate_case(self):
        # with a zero shift every informed router should track the oracle closely
        cfg = linear_pool_config(rounds=1, seed=13, delta=0.0)
        table = run_experiment(cfg)
        eg = {(r[0], r[1]): r[3] for r in table.aggregates}
        for bucket in PMUR_BUCKETS:
            b = float(bucket)
            vals = [eg[(rid, b)] for rid in ("meta_r", "meta_dr", "pooled", "oracle_full_gs")]
            assert max(vals) - min(vals) <= 0.02

    def test_round_failures_abort_within_budget_zero(self):
        # a single PB sample makes variance normalization degenerate in every round
        cfg = linear_pool_config(rounds=2, seed=14)
        bad = config_from_dict(dict(cfg.to_dict(), **{
            "data": dict(cfg.to_dict()["data"], pool_size=301),
            "split": {"n_test": 200, "n_gs_train": 100},
        }))
        with pytest.raises(HarnessError, match="round 0"):
            run_experiment(bad)

    def test_all_rounds_failing_within_budget_still_errors(self):
        cfg = linear_pool_config(rounds=2, seed=14)
        bad = config_from_dict(dict(cfg.to_dict(), **{
            "data": dict(cfg.to_dict()["data"], pool_size=301),
            "split": {"n_test": 200, "n_gs_train": 100},
            "round_failure_budget": 5,
        }))
        with pytest.raises(HarnessError, match="no rounds completed"):
            run_experiment(bad)

    def test_metadata_records_provenance(self):
        cfg = linear_pool_config(rounds=1, seed=15)
        table = run_experiment(cfg)
        assert table.metadata["config_hash"]
        assert table.metadata["tree_backend"] in ("cython", "python")
        assert table.metadata["rounds"][0]["normalization_c"] > 0

    def test_results_written_as_csv(self, tmp_path):
        cfg = linear_pool_config(rounds=1, seed=16)
        table = run_experiment(cfg)
        table.write(tmp_path)
        curves = (tmp_path / "curves.csv").read_text().splitlines()
        assert curves[0] == "router_id,mc_round,w,pmur,te"
        assert len(curves) == 1 + len(table.curves)
        agg = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert agg[0] == "router_id,pmur_bucket,median_te,median_eg"
        assert (tmp_path / "meta.json").exists()


class TestPcaAndCostPaths:
    def test_experiment_with_pca_projection(self):
        raw = linear_pool_config(rounds=1, seed=21).to_dict()
        raw["pca_dim"] = 1
        table = run_experiment(config_from_dict(raw))
        assert table.metadata["rounds"][0]["pca_applied"] is True
        assert table.metadata["rounds_completed"] == 1

    def test_pca_dim_at_or_above_raw_dim_is_skipped(self):
        raw = linear_pool_config(rounds=1, seed=22).to_dict()
        raw["pca_dim"] = 2  # equals the synthetic dim
        table = run_experiment(config_from_dict(raw))
        assert table.metadata["rounds"][0]["pca_applied"] is False

    def test_token_cost_sweep_requires_token_counts(self):
        from metarouter.router import CostModel, TokenPricing

        test = simple_test_set()
        model = fit_baseline_router("gs_only", RegressorSpec.knn(k=1), train_gs=test)
        cost = CostModel(kind="token_based", p=TokenPricing(c_in=0.01), a=TokenPricing())
        with pytest.raises(Exception, match="tokens"):
            sweep_router(model, test, cost=cost)

    def test_token_cost_sweep_with_counts(self):
        from metarouter.data import GsSample, Query
        from metarouter.router import CostModel, TokenPricing

        rng = np.random.default_rng(23)
        test = [
            GsSample(Query(id=f"q{i}", embedding=rng.standard_normal(2),
                           tokens_in=100, tokens_out_p=50, tokens_out_a=60),
                     r=float(rng.standard_normal()))
            for i in range(30)
        ]
        model = fit_baseline_router("gs_only", RegressorSpec.knn(k=1), train_gs=test)
        cost = CostModel(kind="token_based",
                         p=TokenPricing(c_in=0.001, c_out=0.002),
                         a=TokenPricing(c_in=0.0005, c_out=0.001))
        points = sweep_router(model, test, cost=cost, grid_size=5)
        assert len(points) == 6
