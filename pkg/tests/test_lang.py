import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifx.dataset import Series, TimeSeriesDataset
from ifx.lang import (
    AGGREGATES,
    FeatureExpr,
    FlattenedTable,
    canonical_name,
    evaluate,
    evaluate_all,
    flatten,
    read_table_csv,
    sample_features,
    schema_from_store,
    write_table_csv,
)
from ifx.store import SelectionCriterion, TableId, build_store
from ifx.transforms import Channel, ReprKind


def store_of(*rows, kinds=(ReprKind.ORIG,)):
    series = [Series(i, (Channel.from_values(r),)) for i, r in enumerate(rows)]
    return build_store(TimeSeriesDataset("t", series, list(range(len(rows))), 1), kinds)


ORIG = TableId(0, ReprKind.ORIG)


def test_names():
    assert canonical_name(FeatureExpr(TableId(4, ReprKind.D), "StdDev")) == "StdDev(TS5D.Value5D)"
    assert canonical_name(FeatureExpr(ORIG, "Count")) == "Count(TS1)"
    sel = SelectionCriterion("axis", 0, 10)
    assert (
        canonical_name(FeatureExpr(TableId(2, ReprKind.D), "Min", sel))
        == "Min(Selection(TS3D, 0<Time<=10).Value3D)"
    )
    sel = SelectionCriterion("value", -0.5, 2.25)
    assert (
        FeatureExpr(TableId(0, ReprKind.PS), "Count", sel).name
        == "Count(Selection(TS1PS, -0.5<Value1PS<=2.25))"
    )


def test_unknown_aggregate():
    with pytest.raises(ValueError):
        FeatureExpr(ORIG, "Mode")


@pytest.mark.parametrize(
    "agg, values, expected",
    [
        ("Mean", [2, 4, 6], 4.0),
        ("StdDev", [1, 1, 1], 0.0),
        ("StdDev", [0, 2, 0], math.sqrt(8 / 9)),
        ("Median", [3, 1, 4, 2], 2.5),
        ("Median", [5, 1, 3], 3.0),
        ("Min", [3, -1, 2], -1.0),
        ("Max", [3, -1, 2], 3.0),
        ("Sum", [3, -1, 2], 4.0),
        ("Count", [3, -1, 2], 3.0),
    ],
)
def test_aggregates(agg, values, expected):
    store = store_of(values)
    assert evaluate(FeatureExpr(ORIG, agg), store, 0) == pytest.approx(expected, abs=1e-15)
    assert evaluate_all(FeatureExpr(ORIG, agg), store)[0] == pytest.approx(expected, abs=1e-15)


def test_stddev_population():
    store = store_of([0.0, 2.0, 5.0])
    sel = SelectionCriterion("value", -1, 2)
    assert evaluate(FeatureExpr(ORIG, "StdDev", sel), store, 0) == 1.0


def test_empty_selection_missing():
    store = store_of([1, 2, 3], [4, 5, 6])
    sel = SelectionCriterion("value", 100, 200)
    assert evaluate(FeatureExpr(ORIG, "Min", sel), store, 0) is None
    assert evaluate(FeatureExpr(ORIG, "Count", sel), store, 0) == 0.0
    col = evaluate_all(FeatureExpr(ORIG, "Min", sel), store)
    assert np.all(np.isnan(col))
    assert evaluate_all(FeatureExpr(ORIG, "Count", sel), store).tolist() == [0.0, 0.0]


def test_unknown_series_or_table():
    store = store_of([1, 2, 3])
    with pytest.raises(KeyError):
        evaluate(FeatureExpr(ORIG, "Mean"), store, 5)
    with pytest.raises(KeyError):
        evaluate(FeatureExpr(TableId(0, ReprKind.D), "Mean"), store, 0)


def test_sample_zero_and_determinism(small_synth):
    schema = schema_from_store(build_store(small_synth))
    assert sample_features(schema, 0) == []
    a = sample_features(schema, 50, seed=4)
    b = sample_features(schema, 50, seed=4)
    assert [e.name for e in a] == [e.name for e in b]
    assert len({e.name for e in a}) == 50
    assert [e.name for e in sample_features(schema, 50, seed=5)] != [e.name for e in a]


def test_sample_retry_cap():
    store = store_of([1, 2, 3])
    schema = schema_from_store(store)
    # one table, seven aggregates, few distinct selections: the space runs out
    out = sample_features(schema, 1000, seed=0, p_sel=0.0)
    assert len(out) == len(AGGREGATES)


def test_sample_bounds_are_training_quantiles(small_synth):
    store = build_store(small_synth)
    schema = schema_from_store(store, grid=10)
    for e in sample_features(schema, 200, seed=1, p_sel=1.0):
        if e.selection is None:
            continue
        q = schema.quantiles[e.table][e.selection.attribute]
        assert e.selection.lower in q and e.selection.upper in q


def test_sample_1000_on_168_tables():
    from ifx.synth import make_synthetic

    ds = make_synthetic(n=20, dims=24, length=16, seed=2)
    store = build_store(ds)
    assert len(store.table_ids) == 168
    out = sample_features(schema_from_store(store), 1000, seed=0)
    assert len({e.name for e in out}) == 1000


def test_flatten_shapes(small_synth):
    store = build_store(small_synth)
    empty = flatten(store, [])
    assert empty.values.shape == (small_synth.n, 0)
    assert np.array_equal(empty.targets, small_synth.targets)
    exprs = [FeatureExpr(ORIG, "Mean"), FeatureExpr(TableId(1, ReprKind.D), "StdDev")]
    t = flatten(store, exprs)
    assert t.values.shape == (small_synth.n, 2)
    assert t.columns == ["Mean(TS1.Value1)", "StdDev(TS2D.Value2D)"]
    for i in (0, 7):
        assert t.values[i, 1] == pytest.approx(np.std(np.diff(small_synth.series[i].dims[1].value)))


def test_flatten_matches_evaluate_and_threads(small_synth):
    store = build_store(small_synth)
    exprs = sample_features(schema_from_store(store), 120, seed=9)
    t1 = flatten(store, exprs)
    t4 = flatten(store, exprs, threads=4)
    assert np.array_equal(t1.values, t4.values, equal_nan=True)
    for j, e in enumerate(exprs):
        for i in (0, 13, 59):
            got = evaluate(e, store, small_synth.ids[i])
            want = t1.values[i, j]
            if got is None:
                assert math.isnan(want)
            else:
                assert want == pytest.approx(got, rel=1e-12, abs=1e-12)


value_lists = st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=3, max_size=30)


@settings(max_examples=60, deadline=None)
@given(value_lists, st.randoms(use_true_random=False))
def test_aggregate_properties(xs, rnd):
    store = store_of(xs)
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    other = store_of(shuffled)
    vals = {a: evaluate(FeatureExpr(ORIG, a), store, 0) for a in AGGREGATES}
    for a in AGGREGATES:
        assert evaluate(FeatureExpr(ORIG, a), other, 0) == pytest.approx(vals[a], rel=1e-9, abs=1e-9)
    tol = 1e-9 * max(1.0, max(abs(x) for x in xs))
    assert vals["Min"] <= vals["Median"] <= vals["Max"]
    assert vals["Min"] - tol <= vals["Mean"] <= vals["Max"] + tol
    assert vals["Sum"] == pytest.approx(vals["Mean"] * vals["Count"], rel=1e-9, abs=tol * len(xs))


def test_table_csv_round_trip(tmp_path):
    t = FlattenedTable(["a", "b"], [[1.5, np.nan], [0.1, 2.0]], [3.0, 4.0])
    p = tmp_path / "f.csv"
    write_table_csv(t, p)
    lines = p.read_text().splitlines()
    assert lines == ["a,b,target", "1.5,,3.0", "0.1,2.0,4.0"]
    back = read_table_csv(p)
    assert back.columns == ["a", "b"]
    assert np.array_equal(back.values, t.values, equal_nan=True)
    assert back.row(0) == {"a": 1.5, "b": None}


def test_table_unique_columns():
    with pytest.raises(ValueError):
        FlattenedTable(["a", "a"], [[1, 2]], [0])
