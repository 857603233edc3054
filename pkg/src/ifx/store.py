"""Relational scheme: a root table plus one secondary table per
(dimension, representation) pair.

Secondary tables are stored column-wise as flat arrays grouped by series, with
an ``offsets`` array so that the rows of the ``k``-th series are
``offsets[k]:offsets[k + 1]``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .transforms import ALL_KINDS, ReprKind, build_all

__all__ = [
    "TableId",
    "SelectionCriterion",
    "SecondaryTable",
    "RelationalStore",
    "build_store",
    "select_records",
    "dump_table_csv",
]

_AXIS_NAMES = {"time": "Time", "frequency": "Frequency", "lag": "Lag"}


@dataclass(frozen=True, order=True)
class TableId:
    dim: int  # 0-based; names are 1-based
    kind: ReprKind

    @property
    def name(self):
        return f"TS{self.dim + 1}{self.kind.suffix}"

    @property
    def value_name(self):
        return f"Value{self.dim + 1}{self.kind.suffix}"

    @property
    def axis_name(self):
        return _AXIS_NAMES[self.kind.axis_kind]

    @classmethod
    def parse(cls, text):
        """Inverse of :attr:`name`, e.g. ``"TS5D"`` -> ``TableId(4, ReprKind.D)``."""
        if not text.startswith("TS"):
            raise ValueError(f"not a table name: {text!r}")
        body = text[2:]
        digits = len(body) - len(body.lstrip("0123456789"))
        if digits == 0:
            raise ValueError(f"not a table name: {text!r}")
        suffix = body[digits:]
        kinds = {k.suffix: k for k in ReprKind}
        if suffix not in kinds:
            raise ValueError(f"unknown representation suffix in {text!r}")
        return cls(int(body[:digits]) - 1, kinds[suffix])

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class SelectionCriterion:
    """Half-open interval ``lower < attribute <= upper`` on ``axis`` or ``value``."""

    attribute: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.attribute not in ("axis", "value"):
            raise ValueError(f"attribute must be 'axis' or 'value', not {self.attribute!r}")
        if not self.lower < self.upper:
            raise ValueError("selection requires lower < upper")

    def mask(self, axis, value):
        col = axis if self.attribute == "axis" else value
        return (col > self.lower) & (col <= self.upper)


@dataclass(frozen=True, eq=False)
class SecondaryTable:
    id: TableId
    series_ids: np.ndarray  # one entry per series, root order
    offsets: np.ndarray  # len(series_ids) + 1
    axis: np.ndarray
    value: np.ndarray

    def __len__(self):
        return len(self.value)

    def rows_of(self, pos):
        lo, hi = self.offsets[pos], self.offsets[pos + 1]
        return self.axis[lo:hi], self.value[lo:hi]

    def row_series(self):
        """Series id of every row."""
        return np.repeat(self.series_ids, np.diff(self.offsets))

    def rows(self):
        """Iterate over ``(series_id, axis, value)`` tuples."""
        sid = self.row_series()
        return zip(sid.tolist(), self.axis.tolist(), self.value.tolist())


class RelationalStore:
    """Root table ``(series_id, target)`` and the secondary tables."""

    def __init__(self, series_ids, targets, tables, dim_count, kinds):
        self.series_ids = np.asarray(series_ids)
        self.targets = np.asarray(targets, dtype=float)
        self.tables = dict(tables)
        self.dim_count = dim_count
        self.kinds = tuple(kinds)
        self._pos = {int(s): i for i, s in enumerate(self.series_ids.tolist())}

    @property
    def n(self):
        return len(self.series_ids)

    @property
    def table_ids(self):
        return sorted(self.tables)

    def position(self, series_id):
        try:
            return self._pos[int(series_id)]
        except (KeyError, TypeError, ValueError):
            raise KeyError(f"unknown series id {series_id!r}") from None

    def table(self, table_id):
        if isinstance(table_id, str):
            table_id = TableId.parse(table_id)
        try:
            return self.tables[table_id]
        except KeyError:
            raise KeyError(f"unknown table {table_id}") from None


def build_store(ds, kinds=ALL_KINDS):
    channels = build_all(ds, kinds)
    ids = np.array(ds.ids)
    tables = {}
    for (dim, kind), chans in channels.items():
        lengths = np.array([len(c) for c in chans], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        axis = np.concatenate([c.axis for c in chans]) if chans else np.empty(0)
        value = np.concatenate([c.value for c in chans]) if chans else np.empty(0)
        for a in (axis, value, offsets):
            a.flags.writeable = False
        tid = TableId(dim, kind)
        tables[tid] = SecondaryTable(tid, ids, offsets, axis, value)
    return RelationalStore(ids, ds.targets, tables, ds.dim_count, kinds)


def select_records(store, table, series_id, crit=None):
    """Rows of ``table`` for ``series_id`` matching ``crit`` (all rows if None).

    Returns ``(axis, value)`` arrays.
    """
    if not isinstance(table, SecondaryTable):
        table = store.table(table)
    axis, value = table.rows_of(store.position(series_id))
    if crit is None:
        return axis, value
    keep = crit.mask(axis, value)
    return axis[keep], value[keep]


def dump_table_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "axis", "value"])
        for sid, a, v in table.rows():
            w.writerow([sid, repr(a), repr(v)])
