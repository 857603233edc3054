"""Aggregate feature language over the relational store.

A feature is ``Agg(Table.Value)`` or ``Agg(Selection(Table, lo<attr<=hi).Value)``
where ``Agg`` is one of :data:`AGGREGATES`. Features are drawn at random
(:func:`sample_features`), evaluated per series (:func:`evaluate`) and
collected into a :class:`FlattenedTable` (:func:`flatten`).

An aggregate over an empty selection is *Missing*: ``None`` from
:func:`evaluate` and ``NaN`` inside a :class:`FlattenedTable`. ``Count`` is
never Missing.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .store import SelectionCriterion, TableId

__all__ = [
    "AGGREGATES",
    "FeatureExpr",
    "FlattenedTable",
    "StoreSchema",
    "canonical_name",
    "schema_from_store",
    "sample_features",
    "evaluate",
    "evaluate_all",
    "flatten",
    "write_table_csv",
    "read_table_csv",
]

AGGREGATES = ("Count", "Mean", "Median", "Min", "Max", "StdDev", "Sum")


def _fmt(x):
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


@dataclass(frozen=True)
class FeatureExpr:
    table: TableId
    agg: str
    selection: SelectionCriterion = None

    def __post_init__(self):
        if self.agg not in AGGREGATES:
            raise ValueError(f"unknown aggregate {self.agg!r}")

    @property
    def name(self):
        return canonical_name(self)


def canonical_name(e):
    t = e.table
    if e.selection is None:
        source = t.name
    else:
        s = e.selection
        attr = t.axis_name if s.attribute == "axis" else t.value_name
        source = f"Selection({t.name}, {_fmt(s.lower)}<{attr}<={_fmt(s.upper)})"
    if e.agg == "Count":
        return f"Count({source})"
    return f"{e.agg}({source}.{t.value_name})"


# --------------------------------------------------------------------------
# sampling


@dataclass
class StoreSchema:
    """Table ids plus, per table, the empirical quantiles of axis and value."""

    tables: list
    quantiles: dict = field(default_factory=dict)  # TableId -> {"axis": arr, "value": arr}


def schema_from_store(store, grid=100):
    """Quantile grid of each attribute, with ``grid + 1`` levels from 0 to 1.

    Quantiles use the ``lower`` method so every bound is an observed value.
    Build this from the training store only.
    """
    levels = np.linspace(0.0, 1.0, grid + 1)
    quantiles = {}
    for tid in store.table_ids:
        t = store.tables[tid]
        q = {}
        for attr, col in (("axis", t.axis), ("value", t.value)):
            if len(col):
                q[attr] = np.unique(np.quantile(col, levels, method="lower"))
            else:
                q[attr] = np.empty(0)
        quantiles[tid] = q
    return StoreSchema(list(store.table_ids), quantiles)


def sample_features(schema, k, seed=0, p_sel=0.5, max_tries=None):
    """Draw up to ``k`` distinct features.

    Each draw picks a table and an aggregate uniformly; with probability
    ``p_sel`` it adds a selection on a uniformly chosen attribute, bounded by
    two distinct quantiles of that attribute picked at uniform ranks.
    Duplicate names are redrawn; after ``max_tries`` draws (default ``10 * k``)
    the features found so far are returned.
    """
    if k <= 0 or not schema.tables:
        return []
    if max_tries is None:
        max_tries = 10 * k
    rng = np.random.default_rng(seed)
    out, names = [], set()
    tries = 0
    while len(out) < k and tries < max_tries:
        tries += 1
        tid = schema.tables[rng.integers(len(schema.tables))]
        agg = AGGREGATES[rng.integers(len(AGGREGATES))]
        sel = None
        if rng.random() < p_sel:
            attr = ("axis", "value")[rng.integers(2)]
            q = schema.quantiles.get(tid, {}).get(attr, np.empty(0))
            if len(q) >= 2:
                a, b = sorted(rng.choice(len(q), size=2, replace=False).tolist())
                sel = SelectionCriterion(attr, float(q[a]), float(q[b]))
        e = FeatureExpr(tid, agg, sel)
        name = canonical_name(e)
        if name in names:
            continue
        names.add(name)
        out.append(e)
    return out


# --------------------------------------------------------------------------
# evaluation


def _aggregate(agg, values):
    if agg == "Count":
        return float(len(values))
    if len(values) == 0:
        return None
    if agg == "Mean":
        return float(np.mean(values))
    if agg == "Median":
        return float(np.median(values))
    if agg == "Min":
        return float(np.min(values))
    if agg == "Max":
        return float(np.max(values))
    if agg == "StdDev":
        return float(np.std(values))
    return float(np.sum(values))


def evaluate(e, store, series_id):
    """Value of ``e`` for one series, ``None`` when Missing."""
    t = store.table(e.table)
    axis, value = t.rows_of(store.position(series_id))
    if e.selection is not None:
        value = value[e.selection.mask(axis, value)]
    return _aggregate(e.agg, value)


def evaluate_all(e, store):
    """Value of ``e`` for every series of ``store`` (root order), NaN = Missing."""
    t = store.table(e.table)
    n = len(t.offsets) - 1
    out = np.full(n, np.nan)
    if n == 0:
        return out
    lengths = np.diff(t.offsets)
    starts = t.offsets[:-1]
    value = t.value
    if e.selection is not None:
        keep = e.selection.mask(t.axis, value)
    else:
        keep = np.ones(len(value), dtype=bool)
    # segments are never empty here: every channel has at least one row
    nonempty_rows = lengths > 0
    idx = starts[nonempty_rows]
    counts = np.zeros(n)
    counts[nonempty_rows] = np.add.reduceat(keep.astype(float), idx)
    if e.agg == "Count":
        return counts
    has = counts > 0
    if e.agg == "Median":
        for k in np.flatnonzero(has):
            seg = value[starts[k]:starts[k] + lengths[k]]
            out[k] = np.median(seg[keep[starts[k]:starts[k] + lengths[k]]])
        return out
    if e.agg in ("Min", "Max"):
        fill = np.inf if e.agg == "Min" else -np.inf
        ufunc = np.minimum if e.agg == "Min" else np.maximum
        masked = np.where(keep, value, fill)
        red = np.full(n, np.nan)
        red[nonempty_rows] = ufunc.reduceat(masked, idx)
        out[has] = red[has]
        return out
    masked = np.where(keep, value, 0.0)
    sums = np.zeros(n)
    sums[nonempty_rows] = np.add.reduceat(masked, idx)
    if e.agg == "Sum":
        out[has] = sums[has]
        return out
    means = np.divide(sums, counts, out=np.zeros(n), where=has)
    if e.agg == "Mean":
        out[has] = means[has]
        return out
    # StdDev: two-pass around each segment mean for accuracy
    dev = np.where(keep, value - np.repeat(means, lengths), 0.0)
    ss = np.zeros(n)
    ss[nonempty_rows] = np.add.reduceat(dev * dev, idx)
    out[has] = np.sqrt(ss[has] / counts[has])
    return out


@dataclass(eq=False)
class FlattenedTable:
    """Feature matrix (``n x p``, NaN = Missing) with column names and targets."""

    columns: list
    values: np.ndarray
    targets: np.ndarray
    series_ids: np.ndarray = None

    def __post_init__(self):
        self.columns = list(self.columns)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.targets), len(self.columns))
        self.targets = np.asarray(self.targets, dtype=float)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if self.series_ids is None:
            self.series_ids = np.arange(len(self.targets))

    @property
    def n(self):
        return len(self.targets)

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def select(self, names):
        idx = [self.columns.index(c) for c in names]
        return FlattenedTable(list(names), self.values[:, idx], self.targets, self.series_ids)

    def with_targets(self, targets):
        return FlattenedTable(self.columns, self.values, targets, self.series_ids)

    def row(self, i):
        """Row ``i`` as a ``{column: value or None}`` mapping."""
        return {c: (None if math.isnan(v) else v) for c, v in zip(self.columns, self.values[i].tolist())}


def flatten(store, exprs, threads=1):
    """Evaluate ``exprs`` on every series of ``store``."""
    exprs = list(exprs)
    names = [canonical_name(e) for e in exprs]
    values = np.empty((store.n, len(exprs)))
    if threads > 1 and len(exprs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(lambda e: evaluate_all(e, store), exprs))
    else:
        cols = [evaluate_all(e, store) for e in exprs]
    for j, col in enumerate(cols):
        values[:, j] = col
    return FlattenedTable(names, values, store.targets.copy(), store.series_ids.copy())


def write_table_csv(table, path):
    """CSV with the feature names and a ``target`` column; Missing is empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(table.columns) + ["target"])
        for row, y in zip(table.values.tolist(), table.targets.tolist()):
            w.writerow(["" if math.isnan(v) else repr(v) for v in row] + [repr(y)])


def read_table_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "target":
            raise ValueError(f"{path}: last column must be 'target'")
        rows, ys = [], []
        for rec in reader:
            rows.append([float(v) if v != "" else np.nan for v in rec[:-1]])
            ys.append(float(rec[-1]))
    return FlattenedTable(header[:-1], np.array(rows, dtype=float).reshape(len(ys), len(header) - 1), ys)
