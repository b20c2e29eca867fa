import numpy as np
import pytest

import copurchase.forest as forest_mod
from copurchase.forest import (
    Forest,
    ForestParams,
    best_split,
    gini,
    load_forest,
    save_forest,
    train_forest,
)


def xor_data(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X, y


class TestGini:
    def test_pure_is_zero(self):
        assert gini(np.array([1, 1, 1])) == 0.0
        assert gini(np.array([0, 0])) == 0.0

    def test_balanced_is_half(self):
        assert gini(np.array([0, 1, 0, 1])) == pytest.approx(0.5)

    def test_empty(self):
        assert gini(np.array([])) == 0.0


class TestBestSplit:
    def test_hand_enumerated_case(self):
        # oracle: enumerate the three midpoints by hand
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0, 0, 1, 1])
        parent = 0.5
        gains = {}
        for cut, thr in ((1, 1.5), (2, 2.5), (3, 3.5)):
            left, right = y[:cut], y[cut:]
            weighted = (len(left) * gini(left) + len(right) * gini(right)) / 4
            gains[thr] = parent - weighted
        assert max(gains.values()) == pytest.approx(0.5)
        result = best_split(X, y, np.arange(4), np.array([0]))
        assert result == (0, 2.5, pytest.approx(0.5))

    def test_no_gain_returns_none(self):
        # the only distinct-value boundary preserves the class proportions
        X = np.array([[1.0], [1.0], [2.0], [2.0]])
        y = np.array([0, 1, 0, 1])
        assert best_split(X, y, np.arange(4), np.array([0])) is None

    def test_constant_feature_returns_none(self):
        X = np.ones((6, 1))
        y = np.array([0, 1, 0, 1, 0, 1])
        assert best_split(X, y, np.arange(6), np.array([0])) is None

    def test_tie_breaks_to_lowest_feature_then_threshold(self):
        # identical separating power in both columns
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        y = np.array([0, 0, 1, 1])
        f, thr, _ = best_split(X, y, np.arange(4), np.array([1, 0]))
        assert (f, thr) == (0, 1.5)

    def test_min_samples_leaf_respected(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([1, 0, 0, 0])
        got = best_split(X, y, np.arange(4), np.array([0]), min_samples_leaf=2)
        assert got is None or got[1] == 2.5

    def test_binary_features_threshold_half(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([0, 0, 1, 1])
        f, thr, gain = best_split(X, y, np.arange(4), np.array([0]))
        assert thr == 0.5 and gain == pytest.approx(0.5)


class TestTrainForest:
    def test_separable_1d(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 1))
        y = (X[:, 0] > 0).astype(int)
        model = train_forest(X, y, ForestParams(n_trees=20, max_depth=8), seed=0)
        assert (model.predict(X) == y).mean() == 1.0

    def test_xor_beats_stump_ceiling(self):
        X, y = xor_data()
        X_train, y_train = X[:1500], y[:1500]
        X_test, y_test = X[1500:], y[1500:]
        model = train_forest(
            X_train, y_train, ForestParams(n_trees=40, max_depth=8), seed=2
        )
        acc = (model.predict(X_test) == y_test).mean()
        assert acc > 0.95

    def test_single_class_errors(self):
        X = np.zeros((10, 2))
        with pytest.raises(ValueError, match="single class"):
            train_forest(X, np.ones(10, dtype=int), seed=0)

    def test_nonfinite_feature_named(self):
        X = np.zeros((4, 3))
        X[2, 1] = np.nan
        with pytest.raises(ValueError, match=r"row 2, column 1"):
            train_forest(X, np.array([0, 1, 0, 1]), seed=0)

    def test_seed_determinism(self):
        X, y = xor_data(400)
        p = ForestParams(n_trees=10, max_depth=6)
        a = train_forest(X, y, p, seed=5)
        b = train_forest(X, y, p, seed=5)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.value, tb.value)
        c = train_forest(X, y, p, seed=6)
        assert any(
            not np.array_equal(ta.feature, tc.feature) for ta, tc in zip(a.trees, c.trees)
        )

    def test_parallel_matches_serial(self):
        X, y = xor_data(300)
        p = ForestParams(n_trees=8, max_depth=6)
        serial = train_forest(X, y, p, seed=3, n_jobs=1)
        parallel = train_forest(X, y, p, seed=3, n_jobs=2)
        assert np.array_equal(serial.predict_proba(X), parallel.predict_proba(X))

    def test_row_permutation_invariance_given_bootstrap(self, monkeypatch):
        # fold the permutation into the bootstrap: identity resample on both,
        # distinct feature values -> identical predictions
        X, y = xor_data(150, seed=9)
        monkeypatch.setattr(forest_mod, "_bootstrap_indices", lambda rng, n: np.arange(n))
        p = ForestParams(n_trees=3, max_depth=6)
        base = train_forest(X, y, p, seed=0)
        perm = np.random.default_rng(0).permutation(len(X))
        permuted = train_forest(X[perm], y[perm], p, seed=0)
        grid = np.random.default_rng(1).uniform(-1, 1, size=(50, 2))
        assert np.allclose(base.predict_proba(grid), permuted.predict_proba(grid))

    def test_in_bag_accuracy_perfect_when_separable(self):
        rng = np.random.default_rng(4)
        X = np.unique(rng.normal(size=(120, 1)), axis=0)
        y = (X[:, 0] > 0).astype(int)
        model = train_forest(
            X, y, ForestParams(n_trees=1, max_depth=None, min_samples_leaf=1), seed=0
        )
        tree = model.trees[0]
        assert (tree.predict_proba(X[tree.inbag]).round() == y[tree.inbag]).all()

    def test_oob_accuracy_separable(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(400, 2))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        model = train_forest(X, y, ForestParams(n_trees=30, max_depth=10), seed=1)
        proba = model.oob_proba(X)
        mask = ~np.isnan(proba)
        acc = ((proba[mask] >= 0.5).astype(int) == y[mask]).mean()
        assert acc > 0.95


class TestPredict:
    def test_probability_bounds_and_mean(self):
        X, y = xor_data(300)
        model = train_forest(X, y, ForestParams(n_trees=10, max_depth=4), seed=0)
        proba = model.predict_proba(X)
        assert np.all((proba >= 0) & (proba <= 1))
        per_tree = np.stack([t.predict_proba(X) for t in model.trees])
        assert np.allclose(proba, per_tree.mean(axis=0))

    def test_two_tree_average(self):
        X, y = xor_data(100)
        model = train_forest(X, y, ForestParams(n_trees=2, max_depth=3), seed=0)
        proba = model.predict_proba(X[:5])
        a = model.trees[0].predict_proba(X[:5])
        b = model.trees[1].predict_proba(X[:5])
        assert np.allclose(proba, (a + b) / 2)

    def test_single_tree_forest_passthrough(self):
        X, y = xor_data(100)
        model = train_forest(X, y, ForestParams(n_trees=1, max_depth=3), seed=0)
        assert np.allclose(model.predict_proba(X), model.trees[0].predict_proba(X))

    def test_dimension_mismatch_errors(self):
        X, y = xor_data(50)
        model = train_forest(X, y, ForestParams(n_trees=2, max_depth=3), seed=0)
        with pytest.raises(ValueError, match="expected 2 features"):
            model.predict_proba(np.zeros((3, 5)))


def test_save_load_roundtrip(tmp_path):
    X, y = xor_data(200)
    model = train_forest(X, y, ForestParams(n_trees=5, max_depth=5), seed=7)
    save_forest(model, tmp_path / "f")
    loaded = load_forest(tmp_path / "f")
    assert loaded.seed == 7 and loaded.n_features == 2
    assert loaded.params == model.params
    assert np.array_equal(loaded.predict_proba(X), model.predict_proba(X))
