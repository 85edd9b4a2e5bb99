import numpy as np
import pytest

from stresstwin.errors import EmptyDataset, MissingCover, TooManyFeatures
from stresstwin.forest import (
    Dataset,
    DecisionTree,
    ForestParams,
    RandomForest,
    predict_proba,
    train_forest,
)
from stresstwin.shapley import (
    brute_force_shap,
    forest_shap,
    shap_summary,
    subset_value,
    tree_shap,
)


def random_tree(seed, n_features=13, depth=4, n=60):
    """Genuine covers: grow a capped tree on random data."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, (n, n_features))
    y = rng.integers(1, 6, n)
    y[0], y[1] = 1, 2  # ensure two classes
    params = ForestParams(n_trees=1, mtry=n_features, min_samples_leaf=2, max_depth=depth)
    return train_forest(Dataset(X, y), params, seed=seed), rng.normal(0, 1, n_features)


def single_leaf_tree(cls=3, cover=5.0):
    hist = np.zeros((1, 5))
    hist[0, cls - 1] = cover
    return DecisionTree(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.zeros(1),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        cover=np.array([cover]),
        hist=hist,
        max_depth=0,
    )


def depth1_tree(feature=2, thr=0.0, left_cover=3.0, right_cover=7.0):
    hist = np.zeros((3, 5))
    hist[1, 0] = left_cover  # left leaf all class 1
    hist[2, 4] = right_cover  # right leaf all class 5
    hist[0] = hist[1] + hist[2]
    return DecisionTree(
        feature=np.array([feature, -1, -1], dtype=np.int32),
        threshold=np.array([thr, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        cover=np.array([left_cover + right_cover, left_cover, right_cover]),
        hist=hist,
        max_depth=1,
    )


class TestTreeShap:
    def test_single_leaf(self):
        tree = single_leaf_tree()
        phi, phi0 = tree_shap(tree, np.zeros(4), 4)
        assert np.all(phi == 0.0)
        assert phi0[2] == 1.0

    def test_depth1_only_split_feature_attributed(self):
        tree = depth1_tree(feature=2)
        x = np.array([0.0, 0.0, -1.0, 0.0])
        phi, phi0 = tree_shap(tree, x, 4)
        nonzero = np.nonzero(np.abs(phi).sum(axis=1) > 1e-15)[0]
        assert nonzero.tolist() == [2]
        # local accuracy: x goes left -> all class 1
        assert abs(phi0[0] + phi[:, 0].sum() - 1.0) < 1e-12

    def test_oracle_equivalence_100_trees(self):
        max_diff = 0.0
        for seed in range(100):
            forest, x = random_tree(seed)
            tree = forest.trees[0]
            phi_fast, _ = tree_shap(tree, x, 13)
            phi_brute = brute_force_shap(tree, x, 13)
            max_diff = max(max_diff, float(np.abs(phi_fast - phi_brute).max()))
        assert max_diff < 1e-9

    def test_duplicate_split_features_on_path(self):
        # few features force repeated splits along a path
        for seed in range(20):
            rng = np.random.default_rng(seed + 500)
            X = rng.normal(0, 1, (80, 3))
            y = rng.integers(1, 6, 80)
            y[0], y[1] = 1, 2
            forest = train_forest(
                Dataset(X, y), ForestParams(n_trees=1, mtry=3, min_samples_leaf=2, max_depth=5), seed
            )
            tree = forest.trees[0]
            feats_per_path = tree.feature[tree.feature >= 0]
            x = rng.normal(0, 1, 3)
            phi_fast, _ = tree_shap(tree, x, 3)
            phi_brute = brute_force_shap(tree, x, 3)
            assert np.abs(phi_fast - phi_brute).max() < 1e-9

    def test_missing_cover_rejected(self):
        tree = depth1_tree()
        tree.cover[0] = 99.0  # break the partition
        with pytest.raises(MissingCover):
            tree_shap(tree, np.zeros(4), 4)

    def test_symmetry_under_feature_swap(self):
        tree_a = depth1_tree(feature=0)
        tree_b = depth1_tree(feature=1)
        x = np.array([-1.0, -1.0])
        phi_a, _ = tree_shap(tree_a, x, 2)
        phi_b, _ = tree_shap(tree_b, x, 2)
        assert np.allclose(phi_a[0], phi_b[1])
        assert np.allclose(phi_a[1], phi_b[0])


class TestBruteForce:
    def test_single_leaf_zero(self):
        phi = brute_force_shap(single_leaf_tree(), np.zeros(3), 3)
        assert np.all(phi == 0.0)

    def test_hand_enumerated_depth1(self):
        # d=2, split on feature 0 at 0, x goes left (all class 1).
        # v(empty)=0.3, v({0})=1, v({1})=0.3, v({0,1})=1 for class 1,
        # so phi_0 = 0.7 and phi_1 = 0.
        tree = depth1_tree(feature=0, left_cover=3.0, right_cover=7.0)
        x = np.array([-1.0, 0.0])
        phi = brute_force_shap(tree, x, 2)
        assert abs(phi[0, 0] - 0.7) < 1e-12
        assert abs(phi[1, 0]) < 1e-12

    def test_efficiency_axiom(self):
        for seed in range(25):
            forest, x = random_tree(seed, n_features=6)
            tree = forest.trees[0]
            phi = brute_force_shap(tree, x, 6)
            v_empty = subset_value(tree, x, 6, 0)
            v_full = subset_value(tree, x, 6, (1 << 6) - 1)
            assert np.abs(v_empty + phi.sum(axis=0) - v_full).max() < 1e-12

    def test_too_many_features(self):
        with pytest.raises(TooManyFeatures):
            brute_force_shap(single_leaf_tree(), np.zeros(16), 16)


class TestForestShap:
    def test_identical_trees_equal_single(self):
        tree = depth1_tree(feature=1)
        forest = RandomForest(trees=[tree, tree, tree], n_features=4)
        x = np.array([0.0, 5.0, 0.0, 0.0])
        single_phi, single_phi0 = tree_shap(tree, x, 4)
        exp = forest_shap(forest, x)
        assert np.allclose(exp.phi, single_phi)
        assert np.allclose(exp.phi0, single_phi0)

    def test_local_accuracy_100_samples(self):
        rng = np.random.default_rng(77)
        X = rng.normal(0, 1, (300, 5))
        y = rng.integers(1, 6, 300)
        y[:5] = [1, 2, 3, 4, 5]
        forest = train_forest(
            Dataset(X, y), ForestParams(n_trees=30, mtry=2, min_samples_leaf=2), seed=4
        )
        probes = rng.normal(0, 1, (100, 5))
        proba = predict_proba(forest, probes)
        worst = 0.0
        for i in range(100):
            exp = forest_shap(forest, probes[i])
            recon = exp.phi0 + exp.phi.sum(axis=0)
            worst = max(worst, float(np.abs(recon - proba[i]).max()))
        assert worst < 1e-9

    def test_never_split_feature_has_zero_phi(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0, 1, (150, 4))
        X[:, 3] = 1.25  # constant; no split can use it
        y = rng.integers(1, 4, 150)
        y[:3] = [1, 2, 3]
        forest = train_forest(Dataset(X, y), ForestParams(n_trees=15, mtry=4), seed=0)
        for _ in range(10):
            exp = forest_shap(forest, rng.normal(0, 1, 4))
            assert np.all(exp.phi[3] == 0.0)

    def test_per_class_accessor(self):
        tree = depth1_tree()
        forest = RandomForest(trees=[tree], n_features=4)
        exp = forest_shap(forest, np.zeros(4))
        phi_c1, phi0_c1 = exp.for_class(1)
        assert phi_c1.shape == (4,)
        assert isinstance(phi0_c1, float)


class TestShapSummary:
    def test_constant_forest_all_zero(self):
        forest = RandomForest(trees=[single_leaf_tree()], n_features=3)
        ds = Dataset(np.random.default_rng(0).normal(0, 1, (20, 3)), np.full(20, 3))
        summary, beeswarm = shap_summary(forest, ds, ["a", "b", "c"])
        assert all(row["total_mean_abs_phi"] == 0.0 for row in summary)
        assert len(beeswarm) == 60

    def test_split_feature_dominates(self):
        rng = np.random.default_rng(1)
        X = rng.normal(0, 1, (200, 3))
        y = np.where(X[:, 1] > 0, 4, 1)
        forest = train_forest(Dataset(X, y), ForestParams(n_trees=20, mtry=3), seed=0)
        summary, _ = shap_summary(forest, Dataset(X, y), ["f0", "f1", "f2"])
        assert summary[0]["feature"] == "f1"

    def test_empty_dataset(self):
        forest = RandomForest(trees=[single_leaf_tree()], n_features=3)
        with pytest.raises(EmptyDataset):
            shap_summary(forest, Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int)), ["a", "b", "c"])
