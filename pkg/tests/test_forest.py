import numpy as np
import pytest

from apte.errors import DataError
from apte.forest import Forest, ForestParams, fit_forest, oob_mse, permutation_importance, predict

from oracles import reference_tree


def _data(seed=0, n=200, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 2.0 * X[:, 0] + rng.normal(scale=0.5, size=n)
    return X, y


@pytest.mark.parametrize("discrete", [False, True])
def test_trees_match_reference_cart(discrete):
    X, y = _data(n=60, p=3)
    if discrete:
        X = np.round(X * 1.5)
    forest = fit_forest(X, y, ForestParams(n_trees=8, mtry=3, min_node_size=3, seed=11))
    for t, tree in enumerate(forest.trees):
        rows = np.repeat(np.arange(len(y)), forest.inbag[t])
        ref = reference_tree(X, y, rows, 3)
        probe = np.random.default_rng(t).normal(size=(50, 3)) * 1.5
        np.testing.assert_allclose(tree.predict(probe), [ref(x) for x in probe], rtol=1e-10, atol=1e-12)


def test_leaves_respect_min_node_size():
    X, y = _data(n=100)
    forest = fit_forest(X, y, ForestParams(n_trees=5, min_node_size=7, seed=1))
    for t, tree in enumerate(forest.trees):
        rows = np.repeat(np.arange(len(y)), forest.inbag[t])
        leaves = {}
        for r in rows:
            node = 0
            while tree.feature[node] >= 0:
                node = tree.left[node] if X[r, tree.feature[node]] <= tree.threshold[node] else tree.right[node]
            leaves[node] = leaves.get(node, 0) + 1
        assert min(leaves.values()) >= 7


def test_forest_learns_signal():
    X, y = _data()
    forest = fit_forest(X, y, ForestParams(n_trees=100, seed=2))
    assert oob_mse(forest, y) < 0.5 * np.var(y)
    assert predict(forest, [1.0, 0, 0, 0]) > predict(forest, [-1.0, 0, 0, 0])


def test_same_seed_same_forest_any_thread_count():
    X, y = _data(n=150)
    a = fit_forest(X, y, ForestParams(n_trees=40, seed=5, n_jobs=1))
    b = fit_forest(X, y, ForestParams(n_trees=40, seed=5, n_jobs=4))
    c = fit_forest(X, y, ForestParams(n_trees=40, seed=6))
    assert a.to_json() == b.to_json()
    assert a.to_json() != c.to_json()
    ia = permutation_importance(a, X, y)
    ib = permutation_importance(b, X, y)
    assert ia == ib


def test_tree_prefix_stable_when_adding_trees():
    X, y = _data(n=80)
    small = fit_forest(X, y, ForestParams(n_trees=5, seed=9))
    big = fit_forest(X, y, ForestParams(n_trees=10, seed=9))
    for s, b in zip(small.trees, big.trees):
        np.testing.assert_array_equal(s.threshold, b.threshold)


def test_json_round_trip_predicts_identically():
    X, y = _data(n=80)
    forest = fit_forest(X, y, ForestParams(n_trees=10, seed=3), ["a", "b", "c", "d"])
    back = Forest.from_json(forest.to_json())
    assert back.feature_names == ("a", "b", "c", "d")
    np.testing.assert_array_equal(back.predict(X), forest.predict(X))
    np.testing.assert_array_equal(back.oob_predictions, forest.oob_predictions)


def test_from_json_rejects_other_documents():
    with pytest.raises(DataError):
        Forest.from_json('{"format": "something"}')


def test_importance_ranks_informative_feature_first():
    X, y = _data(n=300, p=5)
    forest = fit_forest(X, y, ForestParams(n_trees=100, seed=4))
    imp = permutation_importance(forest, X, y)
    assert imp.ranking()[0] == "x1"
    assert imp.as_dict()["x1"] > 1.0


def test_constant_target_warns_and_predicts_constant():
    X, _ = _data(n=40)
    with pytest.warns(RuntimeWarning, match="constant"):
        forest = fit_forest(X, np.full(40, 3.0), ForestParams(n_trees=5))
    np.testing.assert_allclose(forest.predict(X), 3.0)


def test_missing_cell_names_location():
    X, y = _data(n=40)
    X[7, 2] = np.nan
    with pytest.raises(DataError, match="row 7, column 2"):
        fit_forest(X, y, ForestParams(n_trees=2))


@pytest.mark.parametrize(
    "params",
    [ForestParams(n_trees=0), ForestParams(mtry=9), ForestParams(min_node_size=0), ForestParams(n_jobs=0)],
)
def test_invalid_params(params):
    X, y = _data(n=40)
    with pytest.raises(DataError):
        fit_forest(X, y, params)


def test_predict_dimension_checks():
    X, y = _data(n=40)
    forest = fit_forest(X, y, ForestParams(n_trees=2))
    with pytest.raises(DataError):
        predict(forest, [1.0, 2.0])
    with pytest.raises(DataError):
        forest.predict(np.zeros((3, 5)))


def test_too_few_rows():
    with pytest.raises(DataError):
        fit_forest(np.zeros((4, 2)), np.arange(4.0), ForestParams(min_node_size=5))
