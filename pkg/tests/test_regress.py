import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifx.errors import DomainError, SchemaError
from ifx.lang import FlattenedTable
from ifx.regress import (
    ForestModel,
    MeanBaseline,
    fit_baseline,
    fit_forest,
    fit_tree,
    load_model,
    model_from_json,
    model_to_json,
    predict,
    predict_table,
    rmse,
    save_model,
)


def table(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"f{j}" for j in range(X.shape[1])]
    return FlattenedTable(names, X, y)


def test_rmse_examples():
    assert rmse([1, 2], [1, 2]) == 0
    assert rmse([0], [2]) == 2
    assert rmse([1, 3], [2, 2]) == 1
    with pytest.raises(DomainError):
        rmse([1, 2], [1])
    with pytest.raises(DomainError):
        rmse([], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-8000, 8000), st.integers(-8000, 8000)), min_size=1, max_size=20))
def test_rmse_nonneg(pairs):
    # values on a 1/8 grid so squared differences never underflow
    p, t = (np.array(c) / 8.0 for c in zip(*pairs))
    r = rmse(p, t)
    assert r >= 0
    assert (r == 0) == bool(np.array_equal(p, t))


def test_baseline():
    m = fit_baseline([1, 2, 3])
    assert isinstance(m, MeanBaseline) and m.mean == 2.0
    assert predict(m, {}) == 2.0
    assert predict(m, {"anything": 5}) == 2.0
    with pytest.raises(DomainError):
        fit_baseline([])


def test_constant_targets_single_leaf():
    t = table(np.random.default_rng(0).standard_normal((20, 3)), np.full(20, 4.5))
    m = fit_tree(t)
    assert m.node_count == 1
    assert predict(m, t.row(0)) == 4.5


def test_perfect_split():
    x = np.array([0.1, 0.4, 0.2, 3.0, 2.5, 4.0])
    y = np.array([0, 0, 0, 1, 1, 1.0])
    m = fit_tree(table(x, y))
    assert rmse(predict_table(m, table(x, y)), y) == 0
    assert m.threshold[0] == pytest.approx((0.4 + 2.5) / 2)


def test_tree_beats_baseline_on_train():
    rng = np.random.default_rng(1)
    t = table(rng.standard_normal((100, 4)), rng.standard_normal(100))
    tree = rmse(predict_table(fit_tree(t), t), t.targets)
    base = rmse(predict_table(fit_baseline(t), t), t.targets)
    assert tree <= base


def test_train_rmse_non_increasing_in_depth():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((150, 3))
    t = table(X, X[:, 0] ** 2 + 0.3 * rng.standard_normal(150))
    errs = [rmse(predict_table(fit_tree(t, max_depth=d), t), t.targets) for d in range(1, 9)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert fit_tree(t, max_depth=3).depth <= 3


def test_min_leaf():
    rng = np.random.default_rng(3)
    t = table(rng.standard_normal((60, 2)), rng.standard_normal(60))
    m = fit_tree(t, min_leaf=7)
    leaves = m.feature < 0
    assert m.n_samples[leaves].min() >= 7


@pytest.mark.parametrize("depth", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_matches_sklearn_single_feature(depth, seed):
    sk = pytest.importorskip("sklearn.tree")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(80)
    y = np.sin(2 * x) + 0.2 * rng.standard_normal(80)
    ours = fit_tree(table(x, y), max_depth=depth)
    ref = sk.DecisionTreeRegressor(max_depth=depth).fit(x[:, None], y)
    grid = np.linspace(-3, 3, 301)
    np.testing.assert_allclose(
        predict_table(ours, table(grid, np.zeros_like(grid))), ref.predict(grid[:, None]), rtol=0, atol=1e-12
    )
    # the reference stores thresholds in single precision
    assert np.float32(ours.threshold[0]) == np.float32(ref.tree_.threshold[0])


def test_tie_goes_to_lower_threshold():
    # y symmetric: cutting after 1 or after 3 reduce the error equally
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    y = np.array([5.0, 0.0, 0.0, 0.0, 5.0])
    m = fit_tree(table(x, y), max_depth=1)
    assert m.threshold[0] == 0.5


def test_tie_goes_to_first_column():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    m = fit_tree(table(np.column_stack([x * 2, x]), y), max_depth=1)
    assert m.feature[0] == 0


def test_missing_routing():
    # 4 known rows left, 2 right; NaN rows follow the bigger side
    x = np.array([0.0, 0.1, 0.2, 0.3, 5.0, 5.1, np.nan, np.nan])
    y = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    m = fit_tree(table(x, y), max_depth=1)
    assert bool(m.missing_left[0])
    assert predict(m, {"f0": None}) == pytest.approx(0.0)
    assert predict(m, {"f0": float("nan")}) == pytest.approx(0.0)
    assert predict(m, {"f0": 9.0}) == pytest.approx(1.0)


def test_predict_missing_column():
    m = fit_tree(table([1, 2, 3], [1, 2, 3], ["a"]))
    with pytest.raises(SchemaError):
        predict(m, {"b": 1})
    with pytest.raises(SchemaError):
        predict_table(m, table([1], [0], ["b"]))


def test_empty_table():
    with pytest.raises(DomainError):
        fit_tree(table(np.empty((0, 1)), []))
    with pytest.raises(DomainError):
        fit_forest(table(np.empty((0, 1)), []))
    with pytest.raises(DomainError):
        fit_forest(table([1.0], [1.0]), n_trees=0)


def test_degenerate_forest_equals_tree():
    rng = np.random.default_rng(5)
    t = table(rng.standard_normal((70, 3)), rng.standard_normal(70))
    f = fit_forest(t, n_trees=1, bootstrap=False, feature_frac=1.0)
    assert np.array_equal(predict_table(f, t), predict_table(fit_tree(t), t))


def test_forest_determinism_and_threads():
    rng = np.random.default_rng(6)
    t = table(rng.standard_normal((60, 4)), rng.standard_normal(60))
    a = predict_table(fit_forest(t, n_trees=15, seed=3, feature_frac=0.5), t)
    b = predict_table(fit_forest(t, n_trees=15, seed=3, feature_frac=0.5, threads=4), t)
    c = predict_table(fit_forest(t, n_trees=15, seed=4, feature_frac=0.5), t)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_forest_of_identical_trees():
    rng = np.random.default_rng(7)
    t = table(rng.standard_normal((30, 2)), rng.standard_normal(30))
    tree = fit_tree(t)
    forest = ForestModel([tree, tree, tree], [1, 2, 3], t.columns)
    row = t.row(4)
    assert predict(forest, row) == predict(tree, row)


def test_forest_beats_tree_statistically():
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((300, 3))
        y = X[:, 0] + 0.5 * rng.standard_normal(300)
        train, test = table(X[:200], y[:200]), table(X[200:], y[200:])
        tree = rmse(predict_table(fit_tree(train), test), test.targets)
        forest = rmse(predict_table(fit_forest(train, n_trees=50, seed=seed), test), test.targets)
        wins += forest <= tree
    assert wins >= 8


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    X = rng.standard_normal((50, 2))
    X[rng.random(50) < 0.2, 1] = np.nan
    t = table(X, X[:, 0] + rng.standard_normal(50))
    for model in (fit_baseline(t), fit_tree(t, max_depth=4), fit_forest(t, n_trees=5, seed=1)):
        back = model_from_json(model_to_json(model))
        assert np.array_equal(predict_table(back, t), predict_table(model, t))
        p = tmp_path / "m.json"
        save_model(model, p)
        assert np.array_equal(predict_table(load_model(p), t), predict_table(model, t))
    doc = json.loads(model_to_json(fit_forest(t, n_trees=2, seed=9)))
    assert doc["format"] == "ifx-model" and doc["version"] == 1 and len(doc["seeds"]) == 2


def test_json_rejects_foreign_documents():
    with pytest.raises(ValueError):
        model_from_json('{"format": "other"}')
    with pytest.raises(ValueError):
        model_from_json('{"format": "ifx-model", "version": 99, "kind": "tree"}')
    with pytest.raises(ValueError):
        model_from_json('{"format": "ifx-model", "version": 1, "kind": "svm"}')
