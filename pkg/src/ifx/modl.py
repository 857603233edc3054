"""Bayesian MAP 2D discretisation of a numeric feature against a numeric target.

A model partitions the ranks of the feature ``v`` into ``I`` intervals and the
ranks of the target ``y`` into ``J`` intervals; ``N_ij`` counts the instances
in each cell. Its cost in bits is::

    2 log N + log C(N+I-1, I-1) + sum_i log C(N_i.+J-1, J-1)
            + sum_i log(N_i.! / prod_j N_ij!) + sum_j log N_.j!

and the null model (``I = J = 1``) costs ``2 log N + log N!``. All logarithms
are base 2. ``level = 1 - cost / null_cost`` is positive for features that
compress the target better than the null model.
"""

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ModelError

__all__ = [
    "DiscretisationModel",
    "ScoredFeature",
    "log2_factorials",
    "cost",
    "grid_cost",
    "null_cost",
    "level",
    "optimize",
    "select_features",
    "scored_report",
    "format_scored_table",
]

_LN2 = math.log(2.0)
_TOL = 1e-9
_LF = [0.0]


def log2_factorials(n):
    """Array ``[log2(0!), ..., log2(n!)]`` (cached, grown on demand)."""
    if len(_LF) <= n:
        _LF.extend(math.lgamma(k + 1) / _LN2 for k in range(len(_LF), n + 1))
    return _LF


def _log2_comb(lf, a, b):
    return lf[a] - lf[b] - lf[a - b]


@dataclass(eq=False)
class DiscretisationModel:
    """``I x J`` grid over (feature, target) ranks.

    ``v_bounds``/``y_bounds`` hold the cut ranks: the number of instances
    lying before each cut. ``v_edges``/``y_edges`` hold the corresponding
    value thresholds (midpoints between neighbouring distinct values; NaN for
    the cut right after the Missing block).
    """

    counts: np.ndarray
    v_bounds: tuple = ()
    y_bounds: tuple = ()
    v_edges: tuple = ()
    y_edges: tuple = ()

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ModelError("counts must be a 2-d matrix")

    @property
    def I(self):  # noqa: E743
        return self.counts.shape[0]

    @property
    def J(self):
        return self.counts.shape[1]

    @property
    def N(self):
        return int(self.counts.sum())

    @property
    def is_null(self):
        return self.counts.shape == (1, 1)

    @classmethod
    def null(cls, n):
        return cls(np.array([[n]]))


@dataclass(eq=False)
class ScoredFeature:
    name: str
    model: DiscretisationModel
    cost: float
    level: float
    null_cost: float = field(default=float("nan"), repr=False)

    @property
    def informative(self):
        return self.level > 0

    @property
    def I(self):  # noqa: E743
        return self.model.I

    @property
    def J(self):
        return self.model.J


def null_cost(n):
    if n < 1:
        raise DomainError(f"null cost needs N >= 1, got {n}")
    lf = log2_factorials(n)
    return 2.0 * math.log2(n) + lf[n]


def grid_cost(counts):
    """Cost in bits of the grid with cell counts ``counts`` (``I x J``)."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.size == 0:
        raise ModelError("counts must be a non-empty 2-d matrix")
    if np.any(counts < 0):
        raise ModelError("negative cell count")
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise ModelError("empty interval in grid")
    n = int(rows.sum())
    i_count, j_count = counts.shape
    lf = log2_factorials(n + max(i_count, j_count))
    total = 2.0 * math.log2(n) + _log2_comb(lf, n + i_count - 1, i_count - 1)
    for r in rows.tolist():
        total += _log2_comb(lf, r + j_count - 1, j_count - 1) + lf[r]
    for c in counts.ravel().tolist():
        total -= lf[c]
    for c in cols.tolist():
        total += lf[c]
    return total


def cost(model, n=None):
    """Cost of ``model`` in bits; ``n`` (if given) must equal its total count."""
    counts = model.counts if isinstance(model, DiscretisationModel) else np.asarray(model)
    if n is not None and int(np.sum(counts)) != n:
        raise ModelError(f"cell counts sum to {int(np.sum(counts))}, expected N={n}")
    return grid_cost(counts)


def level(c, c_null):
    return 1.0 - c / c_null


# --------------------------------------------------------------------------
# optimisation


def _greedy_merge(table, local, local_vec, glob):
    """Bottom-up merge of adjacent groups.

    ``table`` holds one count vector per group; ``local(row)`` is the cost of
    one interval (``local_vec`` the same over the rows of a 2-d array) and
    ``glob[k]`` the part of the cost that depends only on the number ``k`` of
    intervals. Merges are applied best-first down to a single interval and
    the cheapest partition met on the way is returned as ``(starts, cost)``
    with ``starts`` the first group of each interval. Among equal costs the
    coarser partition wins.
    """
    g = len(table)
    first = local_vec(table)
    total = math.fsum(first.tolist()) + glob[g]
    if g == 1:
        return [0], total
    pair = table[:-1] + table[1:]
    deltas = (local_vec(pair) - first[:-1] - first[1:]).tolist()
    rows = table.tolist()
    costs = first.tolist()
    nxt = list(range(1, g + 1))
    prv = list(range(-1, g - 1))
    ver = [0] * g

    def candidate(i):
        j = nxt[i]
        merged = [a + b for a, b in zip(rows[i], rows[j])]
        return (local(merged) - costs[i] - costs[j], i, ver[i], j, ver[j], merged)

    heap = [(d, i, 0, i + 1, 0, m) for i, (d, m) in enumerate(zip(deltas, pair.tolist()))]
    heapq.heapify(heap)
    count = g
    best_total, best_step = total, 0
    removed = []
    while heap:
        d, i, vi, j, vj, merged = heapq.heappop(heap)
        if ver[i] != vi or ver[j] != vj:
            continue
        rows[i] = merged
        costs[i] += costs[j] + d
        rows[j] = None
        ver[i] += 1
        ver[j] += 1
        k = nxt[j]
        nxt[i] = k
        if k < g:
            prv[k] = i
        total += d + glob[count - 1] - glob[count]
        count -= 1
        removed.append(j)
        if total <= best_total + _TOL:
            best_total = min(best_total, total)
            best_step = len(removed)
        if prv[i] >= 0:
            heapq.heappush(heap, candidate(prv[i]))
        if k < g:
            heapq.heappush(heap, candidate(i))
    dropped = set(removed[:best_step])
    return [s for s in range(g) if s not in dropped], best_total


def _merge_runs(table, local, local_vec, glob):
    """Greedy merge after fusing neighbouring groups that all fall in the same
    single interval of the other axis (boundary-point reduction)."""
    nonzero = table > 0
    pure = nonzero.sum(axis=1) == 1
    col = np.argmax(nonzero, axis=1)
    fuse = np.zeros(len(table), dtype=bool)
    fuse[1:] = pure[1:] & pure[:-1] & (col[1:] == col[:-1])
    run_starts = np.flatnonzero(~fuse)
    rows = np.add.reduceat(table, run_starts, axis=0)
    starts, _ = _greedy_merge(rows, local, local_vec, glob(len(rows)))
    return run_starts[starts].tolist()


def _labels(starts, g):
    lab = np.zeros(g, dtype=np.int64)
    lab[np.asarray(starts[1:], dtype=np.int64)] = 1
    return np.cumsum(lab)


def _equal_frequency(group_counts, k):
    n = group_counts.sum()
    cum = np.cumsum(group_counts)
    cuts = np.searchsorted(cum, np.arange(1, k) * n / k, side="left") + 1
    cuts = cuts[(cuts > 0) & (cuts < len(group_counts))]
    return [0] + sorted(set(cuts.tolist()))


class _Search:
    """State shared by the greedy phases for one (v, y) sample."""

    def __init__(self, v, y):
        v = np.asarray(v, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n = n = len(y)
        missing = np.isnan(v)
        self.has_missing = bool(missing.any())
        off = 1 if self.has_missing else 0
        self.v_values, vinv = np.unique(v[~missing], return_inverse=True)
        vg = np.zeros(n, dtype=np.int64)
        vg[~missing] = vinv + off
        self.vg = vg
        self.gv = len(self.v_values) + off
        self.y_values, yg = np.unique(y, return_inverse=True)
        self.yg = yg.astype(np.int64)
        self.gy = len(self.y_values)
        self.v_group_counts = np.bincount(vg, minlength=self.gv)
        self.y_group_counts = np.bincount(self.yg, minlength=self.gy)
        self.lf = log2_factorials(2 * n + 2)
        self.lf_arr = np.asarray(self.lf[: 2 * n + 3])
        self._memo = {}

    # cross tables --------------------------------------------------------

    def v_table(self, ylab, j_count):
        """Counts of each v group over the y intervals (``gv x J``)."""
        flat = np.bincount(self.vg * j_count + ylab, minlength=self.gv * j_count)
        return flat.reshape(self.gv, j_count)

    def y_table(self, vlab, i_count):
        flat = np.bincount(self.yg * i_count + vlab, minlength=self.gy * i_count)
        return flat.reshape(self.gy, i_count)

    def grid(self, vstarts, ystarts):
        vlab = _labels(vstarts, self.gv)[self.vg]
        ylab = _labels(ystarts, self.gy)[self.yg]
        j_count = len(ystarts)
        flat = np.bincount(vlab * j_count + ylab, minlength=len(vstarts) * j_count)
        return flat.reshape(len(vstarts), j_count)

    # cost pieces ---------------------------------------------------------

    def v_local(self, j_count):
        lf = self.lf
        base = lf[j_count - 1]

        def local(row):
            s = 0
            acc = 0.0
            for c in row:
                s += c
                acc += lf[c]
            return lf[s + j_count - 1] - base - acc

        return local

    def v_local_vec(self, j_count):
        lf_arr = self.lf_arr
        base = lf_arr[j_count - 1]
        return lambda c: lf_arr[c.sum(axis=1) + j_count - 1] - base - lf_arr[c].sum(axis=1)

    def y_local_vec(self):
        lf_arr = self.lf_arr
        return lambda c: lf_arr[c.sum(axis=1)] - lf_arr[c].sum(axis=1)

    def v_glob(self):
        """``k -> log C(N+k-1, k-1)`` tabulated for ``k <= g``."""
        lf_arr, n = self.lf_arr, self.n

        def table(g):
            k = np.arange(1, g + 1)
            return [0.0] + (lf_arr[n + k - 1] - lf_arr[k - 1] - lf_arr[n]).tolist()

        return table

    def y_local(self):
        lf = self.lf

        def local(col):
            s = 0
            acc = 0.0
            for c in col:
                s += c
                acc += lf[c]
            return lf[s] - acc

        return local

    def y_glob(self, row_sums):
        """``k -> sum_i log C(N_i.+k-1, k-1)`` tabulated for ``k <= g``."""
        lf_arr = self.lf_arr
        rows = np.asarray(row_sums, dtype=np.int64)

        def table(g):
            k = np.arange(1, g + 1)
            terms = lf_arr[rows[:, None] + k - 1] - lf_arr[k - 1] - lf_arr[rows][:, None]
            return [0.0] + terms.sum(axis=0).tolist()

        return table

    # phases --------------------------------------------------------------

    def v_phase(self, ystarts):
        key = ("v", tuple(ystarts))
        if key not in self._memo:
            j_count = len(ystarts)
            ylab = _labels(ystarts, self.gy)[self.yg]
            table = self.v_table(ylab, j_count)
            self._memo[key] = _merge_runs(
                table, self.v_local(j_count), self.v_local_vec(j_count), self.v_glob()
            )
        return self._memo[key]

    def y_phase(self, vstarts):
        key = ("y", tuple(vstarts))
        if key not in self._memo:
            i_count = len(vstarts)
            vlab = _labels(vstarts, self.gv)[self.vg]
            table = self.y_table(vlab, i_count)
            row_sums = np.bincount(vlab, minlength=i_count)
            self._memo[key] = _merge_runs(
                table, self.y_local(), self.y_local_vec(), self.y_glob(row_sums)
            )
        return self._memo[key]

    def _move_boundaries(self, starts, table, interval_cost):
        """Best single-boundary relocation for each cut, left to right."""
        starts = list(starts)
        g = table.shape[0]
        improved = False
        for k in range(1, len(starts)):
            lo = starts[k - 1]
            hi = starts[k + 1] if k + 1 < len(starts) else g
            if hi - lo < 3:
                continue
            block = table[lo:hi]
            cum = np.cumsum(block, axis=0)
            left = cum[:-1]
            right = cum[-1] - left
            total = interval_cost(left) + interval_cost(right)
            cur = starts[k] - lo - 1
            best = int(np.argmin(total))
            if total[best] < total[cur] - _TOL:
                starts[k] = lo + best + 1
                improved = True
        return starts, improved

    def post_optimize(self, vstarts, ystarts, max_rounds=10):
        for _ in range(max_rounds):
            j_count = len(ystarts)
            ylab = _labels(ystarts, self.gy)[self.yg]
            vt = self.v_table(ylab, j_count)
            vstarts, moved_v = self._move_boundaries(vstarts, vt, self.v_local_vec(j_count))

            vlab = _labels(vstarts, self.gv)[self.vg]
            yt = self.y_table(vlab, len(vstarts))
            ystarts, moved_y = self._move_boundaries(ystarts, yt, self.y_local_vec())
            if not (moved_v or moved_y):
                break
        return vstarts, ystarts

    def alternate(self, vstarts=None, ystarts=None, max_rounds=8):
        """Alternate greedy phases from a starting partition of one axis."""
        best = None
        for _ in range(max_rounds):
            if ystarts is not None:
                vstarts = self.v_phase(ystarts)
                ystarts = self.y_phase(vstarts)
            else:
                ystarts = self.y_phase(vstarts)
                vstarts = self.v_phase(ystarts)
            c = grid_cost(self.grid(vstarts, ystarts))
            if best is not None and c >= best[0] - _TOL:
                break
            best = (c, vstarts, ystarts)
        return best

    def edges(self, starts, values, with_missing):
        off = 1 if with_missing else 0
        out = []
        for s in starts[1:]:
            if with_missing and s - 1 == 0:
                out.append(float("nan"))
            else:
                out.append(float((values[s - 1 - off] + values[s - off]) / 2.0))
        return tuple(out)

    def model(self, vstarts, ystarts):
        counts = self.grid(vstarts, ystarts)
        v_cum = np.cumsum(self.v_group_counts)
        y_cum = np.cumsum(self.y_group_counts)
        return DiscretisationModel(
            counts,
            v_bounds=tuple(int(v_cum[s - 1]) for s in vstarts[1:]),
            y_bounds=tuple(int(y_cum[s - 1]) for s in ystarts[1:]),
            v_edges=self.edges(vstarts, self.v_values, self.has_missing),
            y_edges=self.edges(ystarts, self.y_values, False),
        )


_START_SIZES = (2, 3, 4, 8, 16, 32)


def optimize(v, y, name=None):
    """Find a low-cost discretisation model of ``(v, y)``.

    ``v`` may contain NaN (Missing), grouped in a block below every value.
    The search restarts from several equal-frequency partitions of either
    axis; from each start it alternates greedy bottom-up merging of the v
    intervals (target partition fixed) and of the y intervals (feature
    partition fixed), then relocates single boundaries on both axes until no
    move helps. The best model found is compared with the null model and the
    cheaper one is returned, so ``0 <= level < 1``.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0:
        raise DomainError("optimize needs at least one instance")
    if len(v) != n:
        raise DomainError("v and y differ in length")
    if not np.all(np.isfinite(y)):
        raise DomainError("target values must be finite")
    c_null = null_cost(n)
    null = ScoredFeature(name, DiscretisationModel.null(n), c_null, 0.0, c_null)
    search = _Search(v, y)
    if search.gv < 2 or search.gy < 2:
        return null

    found = []
    for k in _START_SIZES:
        if k < search.gy:
            found.append(search.alternate(ystarts=_equal_frequency(search.y_group_counts, k)))
        if k < search.gv:
            found.append(search.alternate(vstarts=_equal_frequency(search.v_group_counts, k)))
    found = [f for f in found if f is not None]
    best = None
    for c, vstarts, ystarts in found:
        vstarts, ystarts = search.post_optimize(vstarts, ystarts)
        c = grid_cost(search.grid(vstarts, ystarts))
        if best is None or c < best[0] - _TOL:
            best = (c, vstarts, ystarts)
    if best is None or len(best[1]) < 2 or len(best[2]) < 2 or best[0] >= c_null - _TOL:
        return null
    c, vstarts, ystarts = best
    return ScoredFeature(name, search.model(vstarts, ystarts), c, level(c, c_null), c_null)


def select_features(table, threads=1):
    """Score every column of a flattened table against its targets.

    Returns :class:`ScoredFeature` objects sorted by decreasing level (ties
    keep column order).
    """
    y = table.targets
    if len(y) < 1:
        raise DomainError("table has no rows")

    def score(j):
        return optimize(table.values[:, j], y, name=table.columns[j])

    idx = range(len(table.columns))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(score, idx))
    else:
        scored = [score(j) for j in idx]
    return sorted(scored, key=lambda f: -f.level)


# --------------------------------------------------------------------------
# reports


def _jsonable_edges(edges):
    return [None if math.isnan(e) else e for e in edges]


def scored_report(scored, n, min_level=0.0):
    """JSON-ready description of scored features."""
    c_null = null_cost(n)
    feats = []
    for f in scored:
        feats.append(
            {
                "name": f.name,
                "level": f.level,
                "cost": f.cost,
                "target_intervals": f.J,
                "v_intervals": f.I,
                "informative": f.level > min_level,
                "counts": f.model.counts.tolist(),
                "v_edges": _jsonable_edges(f.model.v_edges),
                "y_edges": _jsonable_edges(f.model.y_edges),
            }
        )
    return {
        "n": int(n),
        "null_cost": c_null,
        "min_level": min_level,
        "informative_count": sum(1 for f in feats if f["informative"]),
        "features": feats,
    }


def format_scored_table(scored, min_level=0.0):
    """Aligned text table of the informative features."""
    rows = [(f.name, f"{f.level:.4f}", str(f.J), str(f.I)) for f in scored if f.level > min_level]
    header = ("Feature", "level", "#TargetIntervals", "#vIntervals")
    widths = [max([len(header[k])] + [len(r[k]) for r in rows]) for k in range(4)]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest)

    rule = "-" * len(line(header))
    out = [rule, line(header), rule]
    out.extend(line(r) for r in rows)
    out.append(rule)
    return "\n".join(out) + "\n"
