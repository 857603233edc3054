"""Series representations: the original channel plus six simple transforms.

Every transform maps a :class:`Channel` to a new :class:`Channel`. Derivatives
keep the left-point axis value, cumulative sums keep the axis unchanged, the
autocorrelation is indexed by lag and the power spectrum by frequency
(cycles per sample).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import TooShort

__all__ = [
    "ReprKind",
    "Channel",
    "derivative",
    "second_derivative",
    "cumsum",
    "double_cumsum",
    "acf",
    "power_spectrum",
    "transform",
    "build_all",
    "parse_kinds",
    "ALL_KINDS",
]


class ReprKind(Enum):
    ORIG = ""
    D = "D"
    DD = "DD"
    S = "S"
    SS = "SS"
    ACF = "ACF"
    PS = "PS"

    @property
    def suffix(self):
        return self.value

    @property
    def label(self):
        return "Orig" if self is ReprKind.ORIG else self.value

    def __lt__(self, other):
        if not isinstance(other, ReprKind):
            return NotImplemented
        order = list(ReprKind)
        return order.index(self) < order.index(other)

    @property
    def axis_kind(self):
        if self is ReprKind.ACF:
            return "lag"
        if self is ReprKind.PS:
            return "frequency"
        return "time"


ALL_KINDS = tuple(ReprKind)


def parse_kinds(text):
    """Parse a comma separated list such as ``"Orig,D,PS"`` or ``"all"``."""
    text = text.strip()
    if text.lower() == "all":
        return ALL_KINDS
    by_label = {k.label.lower(): k for k in ReprKind}
    kinds = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in by_label:
            raise ValueError(f"unknown representation {token!r}")
        kind = by_label[token]
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise ValueError("no representation selected")
    # canonical order keeps table numbering independent of flag order
    return tuple(k for k in ReprKind if k in kinds)


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Channel:
    """Ordered ``(axis, value)`` points of one representation of one dimension."""

    axis: np.ndarray
    value: np.ndarray
    axis_kind: str = "time"

    def __post_init__(self):
        axis = _readonly(self.axis)
        value = _readonly(self.value)
        if axis.ndim != 1 or axis.shape != value.shape:
            raise ValueError("axis and value must be 1-d arrays of equal length")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "value", value)

    @classmethod
    def from_values(cls, values, axis_kind="time"):
        values = np.asarray(values, dtype=float)
        return cls(np.arange(len(values), dtype=float), values, axis_kind)

    def __len__(self):
        return len(self.value)

    def __eq__(self, other):
        if not isinstance(other, Channel):
            return NotImplemented
        return (
            self.axis_kind == other.axis_kind
            and np.array_equal(self.axis, other.axis)
            and np.array_equal(self.value, other.value)
        )

    __hash__ = None


def _need(c, m, what):
    if len(c) < m:
        raise TooShort(f"{what} needs at least {m} points, got {len(c)}")


def derivative(c):
    """Forward first difference, stamped at the left point."""
    _need(c, 2, "derivative")
    return Channel(c.axis[:-1], np.diff(c.value), c.axis_kind)


def second_derivative(c):
    _need(c, 3, "second derivative")
    return derivative(derivative(c))


def cumsum(c):
    _need(c, 1, "cumulative sum")
    return Channel(c.axis, np.cumsum(c.value), c.axis_kind)


def double_cumsum(c):
    return cumsum(cumsum(c))


def acf(c):
    """Sample autocorrelation ``r_k`` for lags ``0 .. m-1``.

    Both numerator and denominator use the full-series mean; a zero-variance
    channel maps to ``[1, 0, 0, ...]``.
    """
    _need(c, 2, "autocorrelation")
    x = c.value - c.value.mean()
    m = len(x)
    denom = float(np.dot(x, x))
    lags = np.arange(m, dtype=float)
    if denom == 0.0:
        r = np.zeros(m)
        r[0] = 1.0
        return Channel(lags, r, "lag")
    num = np.correlate(x, x, mode="full")[m - 1:]
    r = num / denom
    r[0] = 1.0
    return Channel(lags, r, "lag")


def power_spectrum(c):
    """Periodogram ``|DFT_k|^2 / m`` on the non-redundant half spectrum."""
    _need(c, 2, "power spectrum")
    m = len(c)
    dft = np.fft.rfft(c.value)
    power = (dft.real**2 + dft.imag**2) / m
    freqs = np.arange(len(power), dtype=float) / m
    return Channel(freqs, power, "frequency")


_TRANSFORMS = {
    ReprKind.ORIG: lambda c: c,
    ReprKind.D: derivative,
    ReprKind.DD: second_derivative,
    ReprKind.S: cumsum,
    ReprKind.SS: double_cumsum,
    ReprKind.ACF: acf,
    ReprKind.PS: power_spectrum,
}


def transform(c, kind):
    return _TRANSFORMS[kind](c)


def build_all(ds, kinds=ALL_KINDS):
    """Transform every channel of every series.

    Returns a dict keyed by ``(dim, kind)`` (``dim`` is 0-based) whose values
    are lists of channels aligned with ``ds.series``.
    """
    out = {}
    for dim in range(ds.dim_count):
        for kind in kinds:
            chans = []
            for s in ds.series:
                try:
                    chans.append(transform(s.dims[dim], kind))
                except TooShort as exc:
                    raise TooShort(f"series {s.id}, dimension {dim + 1}: {exc}") from None
            out[(dim, kind)] = chans
    return out
