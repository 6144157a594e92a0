import numpy as np
import pytest

from metarouter.regress import (
    RegressorSpec,
    SpecError,
    fit_regressor,
    predict,
    model_from_dict,
)


def ls_normal_equations(X, y):
    """Independent least-squares oracle: explicit normal equations."""
    Z = np.concatenate([np.ones((len(X), 1)), X], axis=1)
    return np.linalg.solve(Z.T @ Z, Z.T @ y)


class TestRegressorSpec:
    def test_validation(self):
        with pytest.raises(SpecError):
            RegressorSpec.ridge(lam=-1.0)
        with pytest.raises(SpecError):
            RegressorSpec.knn(k=0)
        with pytest.raises(SpecError):
            RegressorSpec.knn(k=3, weighting="gaussian")
        with pytest.raises(SpecError):
            RegressorSpec.tree_ensemble(feature_subsample=0.0)
        with pytest.raises(SpecError):
            RegressorSpec.from_dict({"kind": "ridge", "k": 3})

    def test_dict_round_trip(self):
        for spec in (RegressorSpec.ridge(0.5), RegressorSpec.knn(3, "inverse_distance"),
                     RegressorSpec.tree_ensemble(n_trees=7, seed=9)):
            assert RegressorSpec.from_dict(spec.to_dict()) == spec


class TestRidge:
    def test_identity_line(self):
        model = fit_regressor(RegressorSpec.ridge(0.0), [[0.0], [1.0]], [0.0, 1.0])
        assert predict(model, [[0.5]])[0] == pytest.approx(0.5, abs=1e-9)

    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 3))
        model = fit_regressor(RegressorSpec.ridge(0.0), X, np.full(20, 3.0))
        assert np.max(np.abs(predict(model, X) - 3.0)) < 1e-9

    def test_infinite_shrinkage_collapses_to_weighted_mean(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((30, 2))
        y = rng.standard_normal(30)
        y = y - y.mean()
        w = rng.random(30) + 0.5
        model = fit_regressor(RegressorSpec.ridge(1e12), X, y, weights=w)
        expected = np.sum(w * y) / np.sum(w)
        assert np.max(np.abs(predict(model, X) - expected)) < 1e-6

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            X = rng.standard_normal((40, 4))
            y = rng.standard_normal(40)
            beta = ls_normal_equations(X, y)
            model = fit_regressor(RegressorSpec.ridge(0.0), X, y)
            fitted = np.concatenate([[model.intercept], model.coefs])
            assert np.max(np.abs(fitted - beta)) < 1e-8

    def test_integer_weights_equal_replication(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((15, 3))
        y = rng.standard_normal(15)
        w = rng.integers(1, 4, size=15)
        rep = np.repeat(np.arange(15), w)
        for lam in (0.0, 0.7):
            weighted = fit_regressor(RegressorSpec.ridge(lam), X, y, weights=w.astype(float))
            replicated = fit_regressor(RegressorSpec.ridge(lam), X[rep], y[rep])
            probe = rng.standard_normal((10, 3))
            assert np.max(np.abs(predict(weighted, probe) - predict(replicated, probe))) < 1e-8

    def test_rank_deficient_data_is_handled(self):
        # constant-zero feature column; lam=0 falls back to minimum-norm lstsq
        X = np.zeros((4, 1))
        y = np.array([1.0, 3.0, 5.0, 7.0])
        model = fit_regressor(RegressorSpec.ridge(0.0), X, y)
        assert predict(model, [[0.0]])[0] == pytest.approx(4.0, abs=1e-9)


class TestKnn:
    def test_training_point_identity(self):
        X = [[0.0], [1.0], [5.0]]
        y = [1.0, 2.0, 3.0]
        model = fit_regressor(RegressorSpec.knn(k=1), X, y)
        assert np.array_equal(predict(model, X), y)

    def test_tie_broken_by_lower_index(self):
        model = fit_regressor(RegressorSpec.knn(k=1), [[0.0], [2.0]], [10.0, 20.0])
        assert predict(model, [[1.0]])[0] == 10.0

    def test_constant_target(self):
        model = fit_regressor(RegressorSpec.knn(k=2), [[0.0], [1.0], [2.0]], [3.0] * 3)
        assert np.array_equal(predict(model, [[0.7], [9.0]]), [3.0, 3.0])

    def test_inverse_distance_exact_match_dominates(self):
        model = fit_regressor(
            RegressorSpec.knn(k=2, weighting="inverse_distance"), [[0.0], [1.0]], [5.0, -5.0]
        )
        assert predict(model, [[0.0]])[0] == 5.0

    def test_inverse_distance_weighting(self):
        model = fit_regressor(
            RegressorSpec.knn(k=2, weighting="inverse_distance"), [[0.0], [3.0]], [0.0, 1.0]
        )
        # distances 1 and 2 -> weights 1 and 0.5
        assert predict(model, [[1.0]])[0] == pytest.approx((1.0 * 0.0 + 0.5 * 1.0) / 1.5)

    def test_k_larger_than_train_errors(self):
        with pytest.raises(ValueError, match="exceeds"):
            fit_regressor(RegressorSpec.knn(k=3), [[0.0], [1.0]], [0.0, 1.0])


class TestForest:
    def test_constant_target(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((50, 3))
        spec = RegressorSpec.tree_ensemble(n_trees=10, seed=1)
        model = fit_regressor(spec, X, np.full(50, 3.0))
        assert np.max(np.abs(predict(model, X) - 3.0)) < 1e-9

    def test_predictions_within_label_range(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((200, 4))
        y = rng.standard_normal(200) * 3.0
        model = fit_regressor(RegressorSpec.tree_ensemble(n_trees=15, seed=2), X, y)
        probe = rng.standard_normal((100, 4)) * 2.0
        out = predict(model, probe)
        assert out.min() >= y.min() - 1e-12 and out.max() <= y.max() + 1e-12

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((80, 3))
        y = rng.standard_normal(80)
        spec = RegressorSpec.tree_ensemble(n_trees=5, seed=11)
        a = fit_regressor(spec, X, y)
        b = fit_regressor(spec, X, y)
        probe = rng.standard_normal((20, 3))
        assert np.array_equal(predict(a, probe), predict(b, probe))

    def test_learns_a_step_function(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(400, 2))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        model = fit_regressor(
            RegressorSpec.tree_ensemble(n_trees=30, max_depth=4, min_leaf=5,
                                        feature_subsample=1.0, seed=3), X, y)
        probe = np.array([[0.5, 0.0], [-0.5, 0.0]])
        out = predict(model, probe)
        assert out[0] > 0.8 and out[1] < -0.8

    def test_kernel_leaf_values_are_weighted_means(self):
        # one split at 0.5; leaf values must be the weighted group means
        from metarouter.regress import Tree, predict_tree
        from metarouter.regress import _tree_py

        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([1.0, 3.0, 10.0, 30.0])
        w = np.array([3.0, 1.0, 1.0, 3.0])
        tree = Tree(*_tree_py.build_tree(X, y, w, 1, 2, 1, seed=0))
        left_val, right_val = predict_tree(tree, np.array([[0.0], [1.0]]))
        assert left_val == pytest.approx((3 * 1 + 1 * 3) / 4, abs=1e-12)
        assert right_val == pytest.approx((1 * 10 + 3 * 30) / 4, abs=1e-12)

    def test_kernel_integer_weights_match_replication(self):
        # deep single tree, no bootstrap: weighting by k equals replicating k times
        from metarouter.regress import Tree, predict_tree
        from metarouter.regress import _tree_py

        rng = np.random.default_rng(12)
        X = rng.standard_normal((12, 2))
        y = rng.standard_normal(12)
        w = rng.integers(1, 4, size=12).astype(float)
        rep = np.repeat(np.arange(12), w.astype(int))
        t_w = Tree(*_tree_py.build_tree(X, y, w, 20, 1, 2, seed=5))
        t_r = Tree(*_tree_py.build_tree(X[rep], y[rep], np.ones(len(rep)), 20, 1, 2, seed=5))
        assert np.allclose(predict_tree(t_w, X), predict_tree(t_r, X), atol=1e-9)


class TestPredictContract:
    @pytest.mark.parametrize("spec", [
        RegressorSpec.ridge(0.1),
        RegressorSpec.knn(k=2),
        RegressorSpec.tree_ensemble(n_trees=3, seed=0),
    ])
    def test_empty_input_and_determinism(self, spec):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 2))
        y = rng.standard_normal(10)
        model = fit_regressor(spec, X, y)
        assert predict(model, np.empty((0, 2))).shape == (0,)
        probe = rng.standard_normal((5, 2))
        assert np.array_equal(predict(model, probe), predict(model, probe))

    @pytest.mark.parametrize("spec", [
        RegressorSpec.ridge(0.1),
        RegressorSpec.knn(k=2),
        RegressorSpec.tree_ensemble(n_trees=3, seed=0),
    ])
    def test_dimension_mismatch(self, spec):
        rng = np.random.default_rng(9)
        model = fit_regressor(spec, rng.standard_normal((10, 2)), rng.standard_normal(10))
        with pytest.raises(ValueError, match="dimension"):
            predict(model, rng.standard_normal((4, 3)))

    def test_empty_fit_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            fit_regressor(RegressorSpec.ridge(0.0), np.empty((0, 2)), np.empty(0))

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            fit_regressor(RegressorSpec.ridge(0.0), [[1.0]], [1.0], weights=[0.0])

    def test_non_finite_inputs_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            fit_regressor(RegressorSpec.ridge(0.0), [[np.nan]], [1.0])

    @pytest.mark.parametrize("spec", [
        RegressorSpec.ridge(0.3),
        RegressorSpec.knn(k=2, weighting="inverse_distance"),
        RegressorSpec.tree_ensemble(n_trees=4, seed=5),
    ])
    def test_serialization_round_trip(self, spec):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((12, 2))
        y = rng.standard_normal(12)
        model = fit_regressor(spec, X, y)
        clone = model_from_dict(model.to_dict())
        probe = rng.standard_normal((6, 2))
        assert np.array_equal(predict(model, probe), predict(clone, probe))
