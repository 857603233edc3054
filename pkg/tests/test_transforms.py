import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifx.errors import TooShort
from ifx.transforms import (
    ALL_KINDS,
    Channel,
    ReprKind,
    acf,
    build_all,
    cumsum,
    derivative,
    double_cumsum,
    parse_kinds,
    power_spectrum,
    second_derivative,
    transform,
)
from oracles import naive_acf, naive_dft


def ch(values):
    return Channel.from_values(values)


def test_seven_kinds():
    assert len(ReprKind) == 7
    assert [k.label for k in ALL_KINDS] == ["Orig", "D", "DD", "S", "SS", "ACF", "PS"]


def test_parse_kinds():
    assert parse_kinds("all") == ALL_KINDS
    assert parse_kinds("PS, orig,D") == (ReprKind.ORIG, ReprKind.D, ReprKind.PS)
    with pytest.raises(ValueError):
        parse_kinds("Orig,XYZ")
    with pytest.raises(ValueError):
        parse_kinds(" , ")


@pytest.mark.parametrize(
    "values, expected",
    [([1, 3, 6, 10], [2, 3, 4]), ([5, 5, 5], [0, 0])],
)
def test_derivative(values, expected):
    out = derivative(ch(values))
    assert out.value.tolist() == expected
    assert out.axis.tolist() == list(range(len(expected)))


def test_derivative_keeps_left_stamp():
    c = Channel(np.array([0.5, 2.0, 7.0]), np.array([1.0, 2.0, 4.0]))
    out = derivative(c)
    assert out.axis.tolist() == [0.5, 2.0]
    assert out.value.tolist() == [1.0, 2.0]


@pytest.mark.parametrize(
    "values, expected",
    [([1, 2, 4, 8], [1, 2]), ([0, 1, 2, 3], [0, 0]), ([7, 7, 7], [0])],
)
def test_second_derivative(values, expected):
    assert second_derivative(ch(values)).value.tolist() == expected
    assert derivative(derivative(ch(values))) == second_derivative(ch(values))


def test_cumsums():
    assert cumsum(ch([1, 1, 1])).value.tolist() == [1, 2, 3]
    assert double_cumsum(ch([1, 0, 0])).value.tolist() == [1, 2, 3]
    assert derivative(cumsum(ch([2, 5, 1, 4]))).value.tolist() == [5, 1, 4]


def test_acf_examples():
    assert acf(ch([1, -1, 1, -1])).value.tolist() == pytest.approx([1, -0.75, 0.5, -0.25], abs=1e-15)
    assert acf(ch([3, 3, 3])).value.tolist() == [1.0, 0.0, 0.0]
    out = acf(ch([0.2, 1.7, -3.0, 4.4, 0.0]))
    assert out.value[0] == 1.0
    assert out.axis_kind == "lag"


def test_ps_examples():
    out = power_spectrum(ch([1, 1, 1, 1]))
    assert out.value.tolist() == pytest.approx([4, 0, 0], abs=1e-12)
    assert out.axis.tolist() == [0, 0.25, 0.5]
    assert out.axis_kind == "frequency"
    assert power_spectrum(ch([1, -1, 1, -1])).value.tolist() == pytest.approx([0, 0, 4], abs=1e-12)


def test_ps_matches_naive_dft_length_8():
    x = np.random.default_rng(8).standard_normal(8)
    want = np.abs(naive_dft(x)[:5]) ** 2 / 8
    got = power_spectrum(ch(x)).value
    assert np.max(np.abs(got - want)) <= 1e-9 * np.max(np.abs(want))


@pytest.mark.parametrize(
    "fn, m",
    [(derivative, 2), (second_derivative, 3), (acf, 2), (power_spectrum, 2), (cumsum, 1)],
)
def test_too_short(fn, m):
    with pytest.raises(TooShort):
        fn(ch([1.0] * (m - 1)))
    fn(ch([1.0] * m))


values = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=60)


@settings(max_examples=60, deadline=None)
@given(values)
def test_length_contracts(xs):
    c = ch(xs)
    m = len(xs)
    lengths = {k: len(transform(c, k)) for k in ALL_KINDS}
    assert lengths == {
        ReprKind.ORIG: m, ReprKind.D: m - 1, ReprKind.DD: m - 2, ReprKind.S: m,
        ReprKind.SS: m, ReprKind.ACF: m, ReprKind.PS: m // 2 + 1,
    }


@settings(max_examples=60, deadline=None)
@given(values)
def test_acf_bounded_and_matches_oracle(xs):
    r = acf(ch(xs)).value
    assert np.all(np.abs(r) <= 1 + 1e-12)
    want = np.array(naive_acf(xs))
    assert np.max(np.abs(r - want)) <= 1e-9 * max(1.0, np.max(np.abs(want)))


@settings(max_examples=30, deadline=None)
@given(values)
def test_pure(xs):
    for k in ALL_KINDS:
        a, b = transform(ch(xs), k), transform(ch(xs), k)
        assert a == b


def test_channel_is_read_only():
    c = ch([1, 2, 3])
    with pytest.raises(ValueError):
        c.value[0] = 5


def test_build_all_counts(small_synth):
    out = build_all(small_synth)
    assert len(out) == 7 * small_synth.dim_count
    assert all(len(v) == small_synth.n for v in out.values())
    only = build_all(small_synth, (ReprKind.ORIG,))
    assert list(only) == [(0, ReprKind.ORIG), (1, ReprKind.ORIG)]
    assert only[(1, ReprKind.ORIG)][4] == small_synth.series[4].dims[1]


def test_build_all_reports_short_series():
    from ifx.dataset import Series, TimeSeriesDataset

    ds = TimeSeriesDataset("x", [Series(11, (ch([1, 2]),))], [0.0], 1)
    with pytest.raises(TooShort, match="series 11"):
        build_all(ds, (ReprKind.DD,))
