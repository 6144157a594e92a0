import math

import numpy as np
import pytest

from metarouter.cate import oracle_cate_model
from metarouter.regress import RegressorSpec, fit_regressor, predict
from metarouter.router import (
    BINARY_COST,
    CostModel,
    M_A,
    M_P,
    RouterError,
    TokenPricing,
    bias_correct,
    compute_normalization,
    decide,
    decision_value,
    fit_baseline_router,
    fit_meta_router,
    route,
    scale_gs_outcomes,
)
from metarouter.synthetic import FunctionSpec, generate_routing_round

from util import gs, pb, q, synth_config

RIDGE = RegressorSpec.ridge(1e-6)


def sd_pop(v):
    v = np.asarray(v, dtype=float)
    return math.sqrt(np.mean((v - v.mean()) ** 2))


class TestNormalization:
    @pytest.mark.parametrize("kind", ["magnitude", "variance", "wasserstein"])
    def test_identity_when_scales_match(self, kind):
        vals = [1.0, -1.0, 0.5, 0.25, -0.75]
        c = compute_normalization(vals, vals, kind)
        assert c == pytest.approx(1.0, abs=1e-4 if kind == "wasserstein" else 1e-12)

    def test_hand_arithmetic_fixture(self):
        r = [1.0, -1.0, 0.0, 0.0]
        y = [2.0, -2.0]
        assert compute_normalization(r, y, "magnitude") == pytest.approx(2.0, abs=1e-12)
        # sd_pop(y) = 2, sd_pop(r) = sqrt(1/2): c = 2 sqrt(2)
        assert compute_normalization(r, y, "variance") == pytest.approx(
            2.0 * math.sqrt(2.0), abs=1e-12
        )

    def test_wasserstein_recovers_exact_scaling(self):
        rng = np.random.default_rng(0)
        r = rng.standard_normal(400)
        y = 3.0 * r
        c = compute_normalization(r, y, "wasserstein")
        assert c == pytest.approx(3.0, abs=1e-4)

    def test_wasserstein_unequal_lengths(self):
        rng = np.random.default_rng(1)
        r = rng.standard_normal(301)
        y = 2.0 * rng.standard_normal(977)
        c = compute_normalization(r, y, "wasserstein")
        assert 1.5 < c < 2.5

    def test_variance_matching_is_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            r = rng.standard_normal(rng.integers(3, 50)) * rng.uniform(0.1, 5)
            y = rng.standard_normal(rng.integers(3, 50)) * rng.uniform(0.1, 5)
            c = compute_normalization(r, y, "variance")
            assert abs(sd_pop(c * r) ** 2 - sd_pop(y) ** 2) < 1e-12

    def test_degenerate_inputs(self):
        with pytest.raises(RouterError, match="zero"):
            compute_normalization([0.0, 0.0], [1.0], "magnitude")
        with pytest.raises(RouterError, match="variance"):
            compute_normalization([2.0, 2.0], [1.0, -1.0], "variance")
        with pytest.raises(RouterError, match="nonempty"):
            compute_normalization([], [1.0], "variance")

    def test_scale_gs_outcomes(self):
        out = scale_gs_outcomes([gs(0, [0.0], r=2.0)], 1.5)
        assert out[0].r == 3.0


class TestBiasCorrect:
    def test_zero_shift_is_identity(self):
        delta = oracle_cate_model(lambda S: np.zeros(S.shape[0]), dim=2)
        pb_list = [pb(i, [float(i), 0.0], y=0.5 * i) for i in range(4)]
        out = bias_correct(pb_list, delta)
        assert [s.r for s in out] == [p.y for p in pb_list]
        assert [s.query.id for s in out] == [p.query.id for p in pb_list]

    def test_additive_shift(self):
        delta = oracle_cate_model(lambda S: np.full(S.shape[0], 0.4), dim=1)
        out = bias_correct([pb(0, [0.0], y=1.0)], delta)
        assert out[0].r == pytest.approx(1.4, abs=1e-12)

    def test_empty(self):
        delta = oracle_cate_model(lambda S: np.zeros(S.shape[0]), dim=1)
        assert bias_correct([], delta) == []


class TestMetaRouter:
    def test_empty_pb_reduces_to_gs_only(self):
        rng = np.random.default_rng(3)
        gs_list = [gs(i, rng.standard_normal(2), r=rng.standard_normal()) for i in range(20)]
        delta = oracle_cate_model(lambda S: np.zeros(S.shape[0]), dim=2)
        meta = fit_meta_router(gs_list, [], delta, RIDGE)
        base = fit_baseline_router("gs_only", RIDGE, train_gs=gs_list)
        probe = rng.standard_normal((10, 2))
        assert np.array_equal(meta.predictor.predict(probe), base.predictor.predict(probe))

    def test_true_shift_with_interpolator_recovers_means(self):
        # no noise + exact shift: corrected targets equal m(q) on every query
        rng = np.random.default_rng(4)
        S = rng.standard_normal((30, 2))
        m_fn = lambda X: X[:, 0] * 2.0 + 1.0
        eta_fn = lambda X: m_fn(X) - np.sin(X[:, 1])
        gs_list = [gs(i, S[i], r=m_fn(S[i : i + 1])[0]) for i in range(15)]
        pb_list = [pb(i + 15, S[i + 15], y=eta_fn(S[i + 15 : i + 16])[0]) for i in range(15)]
        delta = oracle_cate_model(lambda X: np.sin(X[:, 1]), dim=2)
        meta = fit_meta_router(gs_list, pb_list, delta, RegressorSpec.knn(k=1))
        assert np.allclose(meta.predictor.predict(S), m_fn(S), atol=1e-12)

    def test_shared_code_path_with_oracle_shift(self):
        # the meta fit with a known shift must equal fitting the corrected union directly
        rng = np.random.default_rng(5)
        gs_list = [gs(i, rng.standard_normal(2), r=rng.standard_normal()) for i in range(10)]
        pb_list = [pb(i + 10, rng.standard_normal(2), y=rng.standard_normal())
                   for i in range(10)]
        delta = oracle_cate_model(lambda S: S[:, 0] * 0.3, dim=2)
        meta = fit_meta_router(gs_list, pb_list, delta, RIDGE)
        corrected = bias_correct(pb_list, delta)
        X = np.stack([s.query.embedding for s in gs_list + corrected])
        yv = np.array([s.r for s in gs_list + corrected])
        direct = fit_regressor(RIDGE, X, yv)
        probe = rng.standard_normal((8, 2))
        assert np.array_equal(meta.predictor.predict(probe), predict(direct, probe))
        assert meta.provenance == "meta_oracle_delta"

    def test_meta_beats_pooled_under_constant_bias(self):
        # biased preference arm drawn from a shifted query distribution
        meta_rmse, pooled_rmse = [], []
        for seed in range(10):
            cfg = synth_config(
                kappa=200 / 2200, dim=2, qp_mean=1.0,
                m=FunctionSpec.linear([0.25, 0.25]),
                eta=FunctionSpec.linear([0.25, 0.25], intercept=-1.0),
                sigma_gs=0.1, sigma_pb=0.1,
            )
            data = generate_routing_round(cfg, n_test=400, n_gs=200, n_pb=2000, seed=seed)
            delta = oracle_cate_model(lambda S: np.ones(S.shape[0]), dim=2)
            meta = fit_meta_router(data.train_gs, data.train_pb, delta, RIDGE)
            pooled = fit_baseline_router("pooled", RIDGE, train_gs=data.train_gs,
                                         train_pb=data.train_pb)
            S = np.stack([s.query.embedding for s in data.test])
            truth = S @ np.array([0.25, 0.25])
            meta_rmse.append(float(np.sqrt(np.mean((meta.predictor.predict(S) - truth) ** 2))))
            pooled_rmse.append(float(np.sqrt(np.mean((pooled.predictor.predict(S) - truth) ** 2))))
        assert np.median(meta_rmse) <= 0.15
        assert np.median(pooled_rmse) >= 0.5

    def test_empty_union_rejected(self):
        delta = oracle_cate_model(lambda S: np.zeros(S.shape[0]), dim=2)
        with pytest.raises(RouterError):
            fit_meta_router([], [], delta, RIDGE)


class TestBaselines:
    def test_pooled_without_pb_equals_gs_only(self):
        rng = np.random.default_rng(6)
        gs_list = [gs(i, rng.standard_normal(2), r=rng.standard_normal()) for i in range(15)]
        pooled = fit_baseline_router("pooled", RIDGE, train_gs=gs_list, train_pb=[])
        gs_only = fit_baseline_router("gs_only", RIDGE, train_gs=gs_list)
        probe = rng.standard_normal((5, 2))
        assert np.array_equal(pooled.predictor.predict(probe),
                              gs_only.predictor.predict(probe))

    def test_unbiased_pb_makes_pooled_match_oracle(self):
        cfg = synth_config(kappa=0.3, dim=2, qp_mean=0.5,
                          m=FunctionSpec.linear([0.5, -0.2], 0.1),
                          eta=FunctionSpec.linear([0.5, -0.2], 0.1),
                          sigma_gs=0.1, sigma_pb=0.1)
        data = generate_routing_round(cfg, n_test=500, n_gs=1500, n_pb=3500, seed=7)
        pooled = fit_baseline_router("pooled", RIDGE, train_gs=data.train_gs,
                                     train_pb=data.train_pb)
        oracle = fit_baseline_router("oracle_full_gs", RIDGE, train_gs=data.train_gs,
                                     oracle_gs=data.oracle_gs)
        S = np.stack([s.query.embedding for s in data.test])
        assert np.max(np.abs(pooled.predictor.predict(S)
                             - oracle.predictor.predict(S))) <= 0.05

    def test_pooled_constant_class_shows_the_mixture_bias(self):
        # kappa = 0.1, m = 2, eta = 1: the pooled constant sits near 2 - 0.9
        cfg = synth_config(kappa=0.1, dim=2, m=FunctionSpec.constant(2.0),
                          eta=FunctionSpec.constant(1.0), sigma_gs=0.05, sigma_pb=0.05)
        data = generate_routing_round(cfg, n_test=1, n_gs=400, n_pb=3600, seed=8)
        pooled = fit_baseline_router("pooled", RegressorSpec.ridge(1e12),
                                     train_gs=data.train_gs, train_pb=data.train_pb)
        fitted_const = float(pooled.predictor.predict(np.zeros((1, 2)))[0])
        assert fitted_const == pytest.approx(2.0 - 0.9, abs=0.05)

    def test_mode_validation(self):
        with pytest.raises(RouterError, match="unknown baseline"):
            fit_baseline_router("bayes", RIDGE, train_gs=[gs(0, [0.0], r=0.0)])
        with pytest.raises(RouterError):
            fit_baseline_router("oracle_full_gs", RIDGE)


class TestDecisionRule:
    def test_binary_arithmetic(self):
        assert decision_value(0.7, 0.5) == pytest.approx(0.2, abs=1e-12)
        assert decide(0.7, 0.5).choice == M_P

    def test_boundary_tie_goes_to_alternative(self):
        d = decide(0.5, 0.5)
        assert d.decision_value == 0.0
        assert d.choice == M_A

    def test_token_based_hand_case(self):
        cost = CostModel(
            kind="token_based",
            p=TokenPricing(c_in=0.001, c_out=0.002, c_fix=0.01),
            a=TokenPricing(),
        )
        query = q(0, [0.0], tokens_in=100, tokens_out_p=50, tokens_out_a=70)
        # cost_p = 0.001*100 + 0.002*50 + 0.01 = 0.21, cost_a = 0
        assert decision_value(0.5, 1.0, cost, query) == pytest.approx(0.29, abs=1e-12)

    def test_token_based_requires_token_counts(self):
        cost = CostModel(kind="token_based", p=TokenPricing(c_in=0.001), a=TokenPricing())
        with pytest.raises(RouterError, match="tokens"):
            decision_value(0.5, 1.0, cost, q(0, [0.0]))

    def test_free_premium_and_dominant_threshold(self):
        assert decide(0.1, 0.0).choice == M_P
        assert decide(0.1, 1e9).choice == M_A

    def test_scale_invariance_binary(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            m_hat = float(rng.standard_normal())
            w = float(rng.random() * 2)
            c = float(rng.uniform(0.01, 100))
            assert decide(m_hat, w).choice == decide(c * m_hat, c * w).choice

    def test_route_uses_predictor(self):
        gs_list = [gs(i, [float(i)], r=float(i)) for i in range(5)]
        model = fit_baseline_router("gs_only", RegressorSpec.knn(k=1), train_gs=gs_list)
        decision = route(model, q(99, [3.0]), w=2.5)
        assert decision.choice == M_P  # m_hat = 3 > 2.5
        assert route(model, q(99, [3.0]), w=3.5).choice == M_A

    def test_routed_set_shrinks_with_w(self):
        rng = np.random.default_rng(10)
        m_hat = rng.standard_normal(100)
        prev = None
        for w in np.linspace(-3, 3, 25):
            chosen = {i for i, v in enumerate(m_hat) if decide(float(v), float(w)).choice == M_P}
            if prev is not None:
                assert chosen <= prev
            prev = chosen

    def test_infinite_weight_points(self):
        assert decide(0.3, -np.inf).choice == M_P
        assert decide(0.3, np.inf).choice == M_A


class TestCostModelSerde:
    def test_round_trip(self):
        cost = CostModel(kind="token_based",
                         p=TokenPricing(0.001, 0.002, 0.01), a=TokenPricing(0.0, 0.0, 0.0))
        assert CostModel.from_dict(cost.to_dict()) == cost
        assert CostModel.from_dict({"kind": "binary"}) == BINARY_COST

    def test_validation(self):
        with pytest.raises(RouterError):
            CostModel(kind="token_based", p=TokenPricing(), a=None)
        with pytest.raises(RouterError):
            TokenPricing(c_in=-1.0)
