import math

import numpy as np
import pytest

from ladiff import kernels
from ladiff.baselines import (BaselineError, DecisionTree, ForestConfig, _fit_one, best_split,
                              build_tree, fit_tfidf, gini, logreg_loss, train_forest,
                              train_forest_ovr, train_logreg)
from oracles import exhaustive_best_split

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def separable_40(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(40, 2))
    return X, (X[:, 0] + X[:, 1] > 0).astype(int)


# --- TF-IDF -----------------------------------------------------------------

def test_tfidf_idf_values():
    tf = fit_tfidf([["a", "b"], ["a"]])
    assert tf.tokens == ["a", "b"]
    assert tf.idf[0] == pytest.approx(1.0, abs=1e-12)
    assert tf.idf[1] == pytest.approx(math.log(1.5) + 1, abs=1e-12)
    assert tf.idf[1] == pytest.approx(1.4055, abs=1e-4)


def test_tfidf_transform():
    tf = fit_tfidf([["a", "b"], ["a"]])
    assert tf.transform([]).tolist() == [0.0, 0.0]
    assert tf.transform(["a", "a"]).tolist() == [1.0, 0.0]
    row = tf.transform(["a", "b", "unseen"])
    assert np.linalg.norm(row) == pytest.approx(1.0)
    assert tf.transform_many([["b"], []]).shape == (2, 2)
    assert np.all(tf.idf > 0)
    with pytest.raises(BaselineError):
        fit_tfidf([])


# --- logistic regression ----------------------------------------------------

def test_logreg_separable_1d():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    model = train_logreg(X, y)
    assert (model.predict(X) == y).mean() == 1.0


def test_logreg_regularization_shrinks_weights():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    small = train_logreg(X, y, l2_lambda=0.01)
    large = train_logreg(X, y, l2_lambda=10.0, lr=0.05)
    assert np.linalg.norm(large.weight) < np.linalg.norm(small.weight)


def test_logreg_zero_epochs_is_init():
    X = np.eye(3)
    model = train_logreg(X, [0, 1, 1], epochs=0, seed=5)
    init = np.random.default_rng(5).uniform(-0.01, 0.01, size=(2, 3))
    assert np.array_equal(model.weight, init) and np.all(model.bias == 0)


def test_logreg_loss_non_increasing():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    losses = [logreg_loss(train_logreg(X, y, epochs=k, lr=0.01), X, y) for k in range(60)]
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


def test_logreg_ovr_multilabel():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    Y = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    model = train_logreg(X, Y, mode="ovr", epochs=2000, lr=1.0)
    assert np.array_equal(model.predict(X), Y)
    with pytest.raises(BaselineError):
        train_logreg(np.zeros((0, 2)), [])


# --- gini and splits --------------------------------------------------------

def test_gini():
    assert gini([4, 0]) == 0.0
    assert gini([2, 2]) == 0.5
    assert gini([3, 1]) == pytest.approx(0.375, abs=1e-15)
    with pytest.raises(BaselineError):
        gini([0, 0])


def test_best_split_examples():
    X = np.array([[1.0], [2.0], [10.0], [11.0]])
    assert best_split(X, [0, 0, 1, 1]) == (0, 6.0)
    assert best_split(X, [1, 1, 1, 1]) is None
    X2 = np.array([[0.0, 1.0], [1.0, 2.0], [0.0, 3.0], [1.0, 4.0]])
    assert best_split(X2, [0, 0, 1, 1]) == (1, 2.5)


def test_best_split_ties_go_to_lower_feature():
    X = np.array([[1.0, 1.0], [2.0, 2.0]])
    assert best_split(X, [0, 1]) == (0, 1.5)


@pytest.mark.parametrize("backend", BACKENDS)
def test_best_split_against_exhaustive(backend):
    kern = kernels.get_backend(backend)
    rng = np.random.default_rng(3)
    for case in range(300):
        n, F = int(rng.integers(1, 9)), int(rng.integers(1, 3))
        X = (rng.integers(0, 4, size=(n, F)).astype(float) if case % 2
             else rng.normal(size=(n, F)).round(1))
        y = rng.integers(0, int(rng.integers(1, 4)), size=n)
        rows = np.arange(n, dtype=np.intp)
        got = None
        counts = np.bincount(y, minlength=3)
        if np.count_nonzero(counts) >= 2:
            f, thr, score = kern.best_split_node(X, rows, y.astype(np.intp),
                                                 np.arange(F, dtype=np.intp), 3)
            if f >= 0 and score < gini(counts) - 1e-12:
                got = (int(f), float(thr))
        assert got == exhaustive_best_split(X.tolist(), y.tolist(), range(F)), (X, y)


# --- forests ----------------------------------------------------------------

def test_forest_learns_separable_set():
    X, y = separable_40()
    forest = train_forest(X, y, ForestConfig(n_estimators=25))
    assert (forest.predict(X) == y).mean() >= 0.95


def test_forest_determinism_and_parallel_equivalence():
    X, y = separable_40(1)
    a = train_forest(X, y, ForestConfig(n_estimators=10))
    b = train_forest(X, y, ForestConfig(n_estimators=10))
    c = train_forest(X, y, ForestConfig(n_estimators=10, n_jobs=4))
    probe = np.random.default_rng(9).uniform(-1, 1, size=(200, 2))
    for other in (b, c):
        assert np.array_equal(a.votes(probe), other.votes(probe))
        for ta, tb in zip(a.trees, other.trees):
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.feature, tb.feature)


def test_single_tree_forest_matches_bootstrap_tree():
    X, y = separable_40(2)
    cfg = ForestConfig(n_estimators=1, min_samples_split=2)
    forest = train_forest(X, y, cfg)
    rng = np.random.default_rng(42)
    rows = np.ascontiguousarray(rng.integers(0, 40, size=40), dtype=np.intp)
    tree = build_tree(X, y.astype(np.intp), 2, rows, rng, 2, 1)
    assert np.array_equal(forest.predict(X), tree.predict(X))
    assert np.array_equal(_fit_one((X, y.astype(np.intp), 2, cfg, 0, None)).value, tree.value)


def test_tree_invariants():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 5))
    y = (X[:, 0] * X[:, 1] > 0).astype(np.intp)
    tree = build_tree(X, y, 2, np.arange(200, dtype=np.intp), rng, 15, 2)
    for node in range(tree.n_nodes):
        if tree.feature[node] < 0:
            # a leaf: either small or unsplittable
            continue
        parent = gini(tree.value[node])
        kids = [tree.left[node], tree.right[node]]
        n = tree.value[node].sum()
        weighted = sum(tree.value[k].sum() / n * gini(tree.value[k]) for k in kids)
        assert weighted < parent
        assert n >= 15


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_cython_and_python_forests_identical():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 20))
    y = (X[:, :3].sum(axis=1) > 0).astype(int)
    cfg = ForestConfig(n_estimators=5)
    a = train_forest(X, y, cfg, kernel=kernels.get_backend("cython"))
    b = train_forest(X, y, cfg, kernel=kernels.get_backend("python"))
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.threshold, tb.threshold)
        assert np.array_equal(ta.apply(X, kernels.get_backend("cython")),
                              tb.apply(X, kernels.get_backend("python")))


def test_forest_ovr():
    X, y = separable_40(3)
    Y = np.stack([y, 1 - y, (X[:, 0] > 0).astype(int)], axis=1)
    model = train_forest_ovr(X, Y, ForestConfig(n_estimators=15))
    pred = model.predict(X)
    assert pred.shape == (40, 3) and (pred == Y).mean() >= 0.95
    assert model.votes(X).max() <= 15


def test_forest_config_validation():
    with pytest.raises(BaselineError):
        ForestConfig(n_estimators=0)
    with pytest.raises(BaselineError):
        ForestConfig(min_samples_split=1)
    assert ForestConfig().n_estimators == 1000
    assert ForestConfig.max_features(300) == 17


def test_empty_tree_predicts_majority():
    tree = DecisionTree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                        np.array([[1.0, 1.0]]))
    assert tree.predict(np.zeros((3, 2))).tolist() == [0, 0, 0]
