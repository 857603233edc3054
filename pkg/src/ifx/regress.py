"""End regressors for flattened tables: CART tree, bagged forest, mean baseline.

Missing feature values (NaN) are supported: each split sends them to the
child that received more non-missing training rows.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SchemaError

__all__ = [
    "RegressionTree",
    "ForestModel",
    "MeanBaseline",
    "fit_tree",
    "fit_forest",
    "fit_baseline",
    "predict",
    "predict_table",
    "rmse",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "ifx-model"
MODEL_VERSION = 1


def rmse(preds, truths):
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truths, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or len(p) == 0:
        raise DomainError(f"rmse needs two equal-length non-empty vectors, got {p.shape} and {t.shape}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _row_vector(columns, row):
    try:
        vals = [row[c] for c in columns]
    except KeyError as exc:
        raise SchemaError(f"row lacks column {exc.args[0]!r}") from None
    return np.array([np.nan if v is None else float(v) for v in vals], dtype=float)


@dataclass(eq=False)
class MeanBaseline:
    mean: float
    columns: list = field(default_factory=list)

    def predict_matrix(self, X):
        return np.full(len(X), self.mean)

    def to_dict(self):
        return {"kind": "baseline", "columns": list(self.columns), "mean": self.mean}


@dataclass(eq=False)
class RegressionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    columns: list
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self):
        return len(self.feature)

    @property
    def depth(self):
        depth = np.zeros(self.node_count, dtype=int)
        for k in range(self.node_count):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def predict_matrix(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            x = X[rows, self.feature[nd]]
            go_left = np.where(np.isnan(x), self.missing_left[nd], x <= self.threshold[nd])
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node].astype(float)

    def to_dict(self):
        return {
            "kind": "tree",
            "columns": list(self.columns),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "missing_left": self.missing_left.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            list(d["columns"]),
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["missing_left"], dtype=bool),
            np.array(d["value"], dtype=float),
            np.array(d["n_samples"], dtype=np.int64),
        )


@dataclass(eq=False)
class ForestModel:
    trees: list
    seeds: list
    columns: list
    params: dict = field(default_factory=dict)

    def predict_matrix(self, X):
        return np.mean([t.predict_matrix(X) for t in self.trees], axis=0)

    def to_dict(self):
        return {
            "kind": "forest",
            "columns": list(self.columns),
            "params": dict(self.params),
            "seeds": [int(s) for s in self.seeds],
            "trees": [t.to_dict() for t in self.trees],
        }


# --------------------------------------------------------------------------
# CART


def _best_split(X, y, features, min_leaf):
    """Lowest-SSE split of ``(X, y)`` over ``features``.

    Returns ``(sse, feature, threshold, missing_left)`` or None.
    """
    n = len(y)
    best = None
    for f in features:
        x = X[:, f]
        miss = np.isnan(x)
        n_miss = int(miss.sum())
        if n - n_miss < 2:
            continue
        if n_miss:
            xs_all, ys_all = x[~miss], y[~miss]
            ym = y[miss]
            s_m, s2_m = ym.sum(), (ym * ym).sum()
        else:
            xs_all, ys_all = x, y
            s_m = s2_m = 0.0
        order = np.argsort(xs_all, kind="stable")
        xs, ys = xs_all[order], ys_all[order]
        pos = np.flatnonzero(xs[:-1] < xs[1:])
        if len(pos) == 0:
            continue
        m = len(xs)
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        nl = pos + 1.0
        nr = m - nl
        sl, sl2 = cs[pos], cs2[pos]
        sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
        to_left = nl >= nr
        if n_miss:
            nl = nl + n_miss * to_left
            nr = nr + n_miss * ~to_left
            sl = sl + s_m * to_left
            sl2 = sl2 + s2_m * to_left
            sr = sr + s_m * ~to_left
            sr2 = sr2 + s2_m * ~to_left
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        sse = np.where(ok, sse, np.inf)
        k = int(np.argmin(sse))
        if best is None or sse[k] < best[0]:
            p = pos[k]
            thr = (xs[p] + xs[p + 1]) / 2.0
            if thr >= xs[p + 1]:
                thr = xs[p]
            best = (float(sse[k]), int(f), float(thr), bool(to_left[k]))
    return best


def _grow(X, y, columns, max_depth=None, min_leaf=1, rng=None, feature_frac=1.0):
    n, p = X.shape
    n_try = max(1, int(round(feature_frac * p))) if p else 0
    feature, threshold, left, right, miss_left, value, n_samples = [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        miss_left.append(False)
        value.append(float(np.mean(y[idx])))
        n_samples.append(len(idx))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if len(idx) < 2 * min_leaf or p == 0:
            continue
        yy = y[idx]
        if np.ptp(yy) == 0:
            continue
        if n_try < p and rng is not None:
            feats = np.sort(rng.choice(p, size=n_try, replace=False))
        else:
            feats = range(p)
        # centre the targets so the sum-of-squares formula stays accurate
        found = _best_split(X[idx], yy - yy.mean(), feats, min_leaf)
        if found is None:
            continue
        _, f, thr, mleft = found
        x = X[idx, f]
        go_left = np.where(np.isnan(x), mleft, x <= thr)
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node], miss_left[node] = f, thr, mleft
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return RegressionTree(
        list(columns),
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(miss_left, dtype=bool),
        np.array(value, dtype=float),
        np.array(n_samples, dtype=np.int64),
    )


def _check_table(table):
    if table.n < 1:
        raise DomainError("cannot fit a regressor on an empty table")
    X = np.asarray(table.values, dtype=float)
    y = np.asarray(table.targets, dtype=float)
    return X, y


def fit_tree(table, max_depth=None, min_leaf=1):
    """Greedy variance-reduction (CART) tree on a flattened table.

    Candidate thresholds are midpoints between consecutive distinct values;
    ties between equally good splits go to the lower threshold and then to
    the earlier column.
    """
    X, y = _check_table(table)
    return _grow(X, y, table.columns, max_depth, min_leaf)


def fit_forest(table, n_trees=100, bootstrap=True, feature_frac=1.0, seed=0,
               max_depth=None, min_leaf=1, threads=1):
    """Bagged CART trees; tree ``b`` uses its own seed derived from ``seed``."""
    X, y = _check_table(table)
    if n_trees < 1:
        raise DomainError("a forest needs at least one tree")
    seeds = np.random.SeedSequence(seed).generate_state(n_trees).tolist()
    n = len(y)

    def grow(s):
        rng = np.random.default_rng(s)
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        return _grow(X[idx], y[idx], table.columns, max_depth, min_leaf, rng, feature_frac)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    params = {
        "n_trees": n_trees,
        "bootstrap": bootstrap,
        "feature_frac": feature_frac,
        "seed": seed,
        "max_depth": max_depth,
        "min_leaf": min_leaf,
    }
    return ForestModel(trees, seeds, list(table.columns), params)


def fit_baseline(table_or_targets):
    """Predict the mean training target, whatever the row."""
    targets = getattr(table_or_targets, "targets", table_or_targets)
    targets = np.asarray(targets, dtype=float)
    if len(targets) == 0:
        raise DomainError("cannot fit a baseline on no targets")
    return MeanBaseline(float(np.mean(targets)))


def predict(model, row):
    """Prediction for one row given as ``{column: value}`` (None/NaN = Missing)."""
    x = _row_vector(model.columns, row)
    return float(model.predict_matrix(x[None, :])[0])


def predict_table(model, table):
    """Predictions for every row of a flattened table, matched by column name."""
    missing = [c for c in model.columns if c not in table.columns]
    if missing:
        raise SchemaError(f"table lacks column(s) {missing[:5]}")
    idx = [table.columns.index(c) for c in model.columns]
    X = np.asarray(table.values, dtype=float)[:, idx]
    return model.predict_matrix(X)


# --------------------------------------------------------------------------
# serialisation


def model_to_json(model):
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    doc.update(model.to_dict())
    return json.dumps(doc, indent=1, allow_nan=False)


def model_from_json(text):
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    kind = doc["kind"]
    if kind == "baseline":
        return MeanBaseline(float(doc["mean"]), list(doc.get("columns", [])))
    if kind == "tree":
        return RegressionTree.from_dict(doc)
    if kind == "forest":
        trees = [RegressionTree.from_dict(t) for t in doc["trees"]]
        return ForestModel(trees, list(doc["seeds"]), list(doc["columns"]), dict(doc["params"]))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model) + "\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
