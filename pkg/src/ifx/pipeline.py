"""End-to-end runs: representations, feature sampling, MODL selection, end
regressor, plus the benchmark and target-permutation protocols.

Everything that is learnt (quantile bounds, selection, regressor) comes from
the training set only; test series are flattened with the features selected
on training data.
"""

import csv
import json
import logging
import os
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import load_dataset, validate
from .errors import DataError, IfxError
from .lang import flatten, sample_features, schema_from_store, write_table_csv
from .modl import format_scored_table, scored_report, select_features
from .regress import (
    fit_baseline,
    fit_forest,
    fit_tree,
    predict_table,
    rmse,
    save_model,
)
from .store import build_store
from .transforms import ALL_KINDS, ReprKind

__all__ = [
    "RunConfig",
    "FittedPipeline",
    "fit_pipeline",
    "run",
    "benchmark",
    "permutation_test",
    "representation_counts",
    "win_tie_loss",
]

log = logging.getLogger(__name__)

REGRESSORS = ("tree", "forest", "baseline", "export")


@dataclass
class RunConfig:
    train: str
    test: str = None
    train_targets: str = None
    test_targets: str = None
    k: int = 100
    seed: int = 0
    kinds: tuple = ALL_KINDS
    regressor: str = "tree"
    min_level: float = 0.0
    out: str = "ifx-out"
    threads: int = 1
    p_sel: float = 0.5
    quantile_grid: int = 100
    n_trees: int = 100
    max_depth: int = None
    min_leaf: int = 1

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.min_level < 0:
            raise ValueError("min_level must be >= 0")
        if self.regressor not in REGRESSORS:
            raise ValueError(f"regressor must be one of {', '.join(REGRESSORS)}")
        self.kinds = tuple(self.kinds)

    def describe(self):
        d = asdict(self)
        d["kinds"] = [k.label for k in self.kinds]
        return d


class _Timer:
    def __init__(self):
        self.stages = {}

    def __call__(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = timer.stages.get(name, 0.0) + time.perf_counter() - self.t0

        return _Stage()


@dataclass(eq=False)
class FittedPipeline:
    exprs: list
    scored: list
    selected: list  # FeatureExpr, ordered by decreasing level
    model: object
    train_table: object  # restricted to selected columns
    kinds: tuple
    timings: dict = field(default_factory=dict)

    @property
    def selected_names(self):
        return [e.name for e in self.selected]

    def transform(self, ds, threads=1):
        """Flatten another dataset with the selected features."""
        store = build_store(ds, self.kinds)
        return flatten(store, self.selected, threads=threads)

    def predict(self, ds, threads=1):
        table = self.transform(ds, threads)
        return predict_table(self.model, table), table


def _check(ds, role):
    report = validate(ds)
    if not report.ok:
        head = "; ".join(report.problems[:5])
        more = f" (+{len(report) - 5} more)" if len(report) > 5 else ""
        raise DataError(f"invalid {role} dataset: {head}{more}")


def _fit_regressor(kind, table, config):
    if kind == "tree":
        return fit_tree(table, max_depth=config.max_depth, min_leaf=config.min_leaf)
    if kind == "forest":
        return fit_forest(
            table,
            n_trees=config.n_trees,
            seed=config.seed,
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            threads=config.threads,
        )
    return fit_baseline(table)


def fit_pipeline(train_ds, config, regressor=None):
    """Fit representations, features, selection and regressor on ``train_ds``.

    With no informative feature (or ``regressor == "baseline"``) the model
    is the mean of the training targets.
    """
    regressor = regressor or config.regressor
    timer = _Timer()
    with timer("transforms"):
        store = build_store(train_ds, config.kinds)
    with timer("sampling"):
        schema = schema_from_store(store, config.quantile_grid)
        exprs = sample_features(schema, config.k, seed=config.seed, p_sel=config.p_sel)
    with timer("evaluation"):
        table = flatten(store, exprs, threads=config.threads)
    with timer("selection"):
        scored = select_features(table, threads=config.threads) if exprs else []
    by_name = {e.name: e for e in exprs}
    selected = [by_name[f.name] for f in scored if f.level > config.min_level]
    train_table = table.select([e.name for e in selected])
    with timer("fit"):
        if not selected or regressor in ("baseline", "export"):
            model = fit_baseline(train_table)
        else:
            model = _fit_regressor(regressor, train_table, config)
    return FittedPipeline(exprs, scored, selected, model, train_table, config.kinds, timer.stages)


def representation_counts(exprs):
    """Selected features per representation and per (1-based) dimension."""
    kinds = Counter(e.table.kind.label for e in exprs)
    dims = Counter(e.table.dim + 1 for e in exprs)
    return (
        {k.label: kinds.get(k.label, 0) for k in ReprKind},
        {str(d): dims[d] for d in sorted(dims)},
    )


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _write_predictions(path, series_ids, preds, targets):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "prediction", "target"])
        for sid, p, y in zip(series_ids.tolist(), preds.tolist(), targets.tolist()):
            w.writerow([sid, repr(p), repr(y)])


def run(config, train_ds=None, test_ds=None):
    """Run the pipeline and write every artifact into ``config.out``.

    Returns the report dictionary (also written to ``report.json``).
    """
    t_start = time.perf_counter()
    if train_ds is None:
        train_ds = load_dataset(config.train, config.train_targets)
    _check(train_ds, "training")
    if test_ds is None and config.test:
        test_ds = load_dataset(config.test, config.test_targets)
    if test_ds is not None:
        _check(test_ds, "test")
        if test_ds.dim_count != train_ds.dim_count:
            raise DataError(
                f"test has {test_ds.dim_count} dimensions, training has {train_ds.dim_count}"
            )
    os.makedirs(config.out, exist_ok=True)

    fitted = fit_pipeline(train_ds, config)
    timings = dict(fitted.timings)
    n_train = train_ds.n
    baseline = fit_baseline(train_ds.targets)
    used = "baseline" if not fitted.selected and config.regressor != "export" else config.regressor

    write_table_csv(fitted.train_table, os.path.join(config.out, "features_train.csv"))
    _dump_json(
        scored_report(fitted.scored, n_train, config.min_level),
        os.path.join(config.out, "scored_features.json"),
    )
    with open(os.path.join(config.out, "scored_features.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_scored_table(fitted.scored, config.min_level))

    kinds, dims = representation_counts(fitted.selected)
    report = {
        "dataset": train_ds.name,
        "n_train": n_train,
        "dimensions": train_ds.dim_count,
        "representations": [k.label for k in config.kinds],
        "k_requested": config.k,
        "k_generated": len(fitted.exprs),
        "informative_count": len(fitted.selected),
        "selected_by_representation": kinds,
        "selected_by_dimension": dims,
        "regressor": used,
        # output location and thread count do not change any result
        "config": {k: v for k, v in config.describe().items() if k not in ("out", "threads")},
    }

    if config.regressor != "export":
        save_model(fitted.model, os.path.join(config.out, "model.json"))
        train_pred = predict_table(fitted.model, fitted.train_table)
        report["rmse_train"] = rmse(train_pred, train_ds.targets)

    if test_ds is not None:
        t0 = time.perf_counter()
        test_table = fitted.transform(test_ds, config.threads)
        write_table_csv(test_table, os.path.join(config.out, "features_test.csv"))
        report["n_test"] = test_ds.n
        report["rmse_baseline_test"] = rmse(baseline.predict_matrix(test_table.values), test_ds.targets)
        if config.regressor != "export":
            preds = predict_table(fitted.model, test_table)
            _write_predictions(
                os.path.join(config.out, "predictions.csv"), test_table.series_ids, preds, test_ds.targets
            )
            report["rmse_test"] = rmse(preds, test_ds.targets)
        timings["test"] = time.perf_counter() - t0

    timings["total"] = time.perf_counter() - t_start
    _dump_json(report, os.path.join(config.out, "report.json"))
    # wall-clock numbers live apart so report.json stays reproducible
    _dump_json({k: round(v, 6) for k, v in timings.items()}, os.path.join(config.out, "timings.json"))
    log.info("%s: %d/%d informative features, regressor=%s",
             train_ds.name, len(fitted.selected), len(fitted.exprs), used)
    report["timings"] = timings
    return report


# --------------------------------------------------------------------------
# benchmark


def _raw_table(ds, length=None):
    """Raw values of every dimension side by side, NaN-padded to ``length``."""
    from .lang import FlattenedTable

    if length is None:
        length = max(len(c) for s in ds.series for c in s.dims)
    cols = [f"Dim{k + 1}[{t}]" for k in range(ds.dim_count) for t in range(length)]
    X = np.full((ds.n, len(cols)), np.nan)
    for i, s in enumerate(ds.series):
        for k, c in enumerate(s.dims):
            m = min(len(c), length)
            X[i, k * length:k * length + m] = c.value[:m]
    return FlattenedTable(cols, X, ds.targets, np.array(ds.ids)), length


def win_tie_loss(rows, columns, rtol=1e-12):
    """Pairwise wins/ties/losses (lower RMSE wins) between result columns."""
    out = {}
    for a in columns:
        for b in columns:
            if a == b:
                continue
            w = t = l = 0
            for r in rows:
                ra, rb = r.get("rmse", {}).get(a), r.get("rmse", {}).get(b)
                if ra is None or rb is None:
                    continue
                if abs(ra - rb) <= rtol * max(abs(ra), abs(rb)):
                    t += 1
                elif ra < rb:
                    w += 1
                else:
                    l += 1
            out[f"{a} vs {b}"] = {"win": w, "tie": t, "loss": l}
    return out


def benchmark(datasets, ks=(10, 100, 1000), regressors=("tree",), base=None,
              include_orig=True, out=None):
    """Run every (K, regressor) combination on each ``(name, train, test)``.

    ``datasets`` items are ``(name, train_path, test_path)`` tuples or
    ``(name, train_ds, test_ds)`` with already loaded datasets. Failures are
    recorded per dataset and do not stop the run.
    """
    base = base or RunConfig(train="")
    rows, columns, failures = [], [], []
    for name, train, test in datasets:
        row = {"dataset": name, "rmse": {}, "informative": {}, "representations": {},
               "seconds": {}}
        try:
            train_ds = load_dataset(train) if isinstance(train, (str, os.PathLike)) else train
            test_ds = load_dataset(test) if isinstance(test, (str, os.PathLike)) else test
            _check(train_ds, "training")
            _check(test_ds, "test")
            row["n_train"], row["n_test"] = train_ds.n, test_ds.n
            row["rmse"]["baseline"] = rmse(
                np.full(test_ds.n, np.mean(train_ds.targets)), test_ds.targets
            )
            if include_orig:
                raw_train, length = _raw_table(train_ds)
                raw_test, _ = _raw_table(test_ds, length)
                for reg in regressors:
                    if reg == "baseline":
                        continue
                    t0 = time.perf_counter()
                    model = _fit_regressor(reg, raw_train, base)
                    row["rmse"][f"orig-{reg}"] = rmse(predict_table(model, raw_test), test_ds.targets)
                    row["seconds"][f"orig-{reg}"] = time.perf_counter() - t0
            for k in ks:
                cfg = replace(base, k=k)
                t0 = time.perf_counter()
                fitted = fit_pipeline(train_ds, cfg, regressor="baseline")
                selection_time = time.perf_counter() - t0
                row["informative"][str(k)] = len(fitted.selected)
                row["representations"][str(k)] = representation_counts(fitted.selected)[0]
                test_table = fitted.transform(test_ds, base.threads)
                for reg in regressors:
                    if reg == "baseline":
                        continue
                    t1 = time.perf_counter()
                    if fitted.selected:
                        model = _fit_regressor(reg, fitted.train_table, cfg)
                    else:
                        model = fit_baseline(fitted.train_table)
                    col = f"{k}-{reg}"
                    row["rmse"][col] = rmse(predict_table(model, test_table), test_ds.targets)
                    row["seconds"][col] = selection_time + time.perf_counter() - t1
        except (IfxError, OSError, ValueError) as exc:
            log.warning("benchmark: %s failed: %s", name, exc)
            failures.append({"dataset": name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        for col in row["rmse"]:
            if col not in columns:
                columns.append(col)
        rows.append(row)
    report = {"columns": columns, "rows": rows, "failures": failures,
              "win_tie_loss": win_tie_loss(rows, columns)}
    if out is not None:
        os.makedirs(out, exist_ok=True)
        _dump_json(report, os.path.join(out, "benchmark.json"))
        with open(os.path.join(out, "benchmark.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_benchmark(report))
        with open(os.path.join(out, "benchmark.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset"] + columns)
            for r in rows:
                w.writerow([r["dataset"]] + [repr(r["rmse"][c]) if c in r["rmse"] else ""
                                             for c in columns])
    return report


def format_benchmark(report):
    cols = report["columns"]
    header = ["Data"] + cols
    body = []
    for r in report["rows"]:
        body.append([r["dataset"]] + [
            f"{r['rmse'][c]:.4g}" if c in r["rmse"] else "-" for c in cols
        ])
    orig = [c for c in cols if c.startswith("orig-")]
    for o in orig:
        reg = o[len("orig-"):]
        line = [f"Win vs {o}"]
        for c in cols:
            key = f"{c} vs {o}"
            if c.endswith(f"-{reg}") and c != o and key in report["win_tie_loss"]:
                line.append(str(report["win_tie_loss"][key]["win"]))
            else:
                line.append("-")
        body.append(line)
    widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    rule = "-" * max(len(s) for s in lines)
    text = "\n".join([rule, lines[0], rule] + lines[1:] + [rule]) + "\n"
    for f in report.get("failures", []):
        text += f"failed: {f['dataset']}: {f['error']}\n"
    return text


# --------------------------------------------------------------------------
# target permutation


def permutation_test(config, trials=10, control=True, train_ds=None):
    """Informative-feature counts after shuffling the training targets.

    Features are sampled once (they do not depend on the targets) and scored
    against ``trials`` independent permutations. The control arm scores the
    original targets.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if train_ds is None:
        train_ds = load_dataset(config.train, config.train_targets)
    _check(train_ds, "training")
    store = build_store(train_ds, config.kinds)
    schema = schema_from_store(store, config.quantile_grid)
    exprs = sample_features(schema, config.k, seed=config.seed, p_sel=config.p_sel)
    table = flatten(store, exprs, threads=config.threads)

    def count(t):
        if not exprs:
            return 0, []
        scored = select_features(t, threads=config.threads)
        chosen = [f for f in scored if f.level > config.min_level]
        return len(chosen), [(f.name, f.level) for f in chosen]

    counts, top = [], []
    for trial in range(trials):
        rng = np.random.default_rng([config.seed, trial])
        shuffled = table.with_targets(rng.permutation(table.targets))
        c, chosen = count(shuffled)
        counts.append(c)
        top.append(chosen[:5])
    report = {
        "dataset": train_ds.name,
        "k_requested": config.k,
        "k_generated": len(exprs),
        "trials": trials,
        "informative_counts": counts,
        "trials_with_zero": sum(1 for c in counts if c == 0),
        "top_spurious": [[{"name": n, "level": lv} for n, lv in t] for t in top],
    }
    if control:
        report["control_informative_count"] = count(table)[0]
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        _dump_json(report, os.path.join(config.out, "permtest.json"))
    return report
