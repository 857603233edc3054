"""Command line entry point: ``ifx run|benchmark|permtest|dump-store|gen-synth``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

import argparse
import json
import logging
import os
import sys

from .dataset import load_dataset, write_ts_file
from .errors import DataError, IfxError
from .pipeline import RunConfig, benchmark, permutation_test, run
from .store import build_store, dump_table_csv
from .synth import make_split
from .transforms import parse_kinds

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("ifx")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for data errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _kinds(text):
    try:
        return parse_kinds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _add_common(p, regressors=True):
    p.add_argument("--train", required=True, help="training set (.ts, or long-format .csv)")
    p.add_argument("--train-targets", help="targets CSV when --train is a long-format CSV")
    p.add_argument("--k", type=_nonneg_int, default=100, help="number of features to draw (default 100)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transforms", type=_kinds, default=parse_kinds("all"),
                   help="'all' or a comma list of Orig,D,DD,S,SS,ACF,PS")
    p.add_argument("--min-level", type=_nonneg_float, default=0.0,
                   help="keep features with level strictly above this (default 0)")
    p.add_argument("--out", default="ifx-out", help="output directory")
    p.add_argument("--threads", type=_pos_int, default=1)
    p.add_argument("--p-sel", type=float, default=0.5, help="probability of a selection term")
    p.add_argument("--quantile-grid", type=_pos_int, default=100)
    if regressors:
        p.add_argument("--n-trees", type=_pos_int, default=100)
        p.add_argument("--max-depth", type=_pos_int, default=None)
        p.add_argument("--min-leaf", type=_pos_int, default=1)


def build_parser():
    parser = _Parser(prog="ifx", description="Interpretable feature extraction for time series regression")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="select features on train, fit, evaluate on test")
    _add_common(p)
    p.add_argument("--test", help="test set; omit for a train-only run")
    p.add_argument("--test-targets")
    p.add_argument("--regressor", choices=("tree", "forest", "baseline", "export"), default="tree")

    p = sub.add_parser("benchmark", help="RMSE table over several datasets")
    _add_common(p)
    p.add_argument("--data", nargs=2, action="append", metavar=("TRAIN", "TEST"), default=[],
                   help="extra train/test pair (repeatable)")
    p.add_argument("--test", help="test set paired with --train")
    p.add_argument("--ks", default="10,100,1000", help="comma list of K values")
    p.add_argument("--regressor", default="tree", help="comma list among tree,forest")
    p.add_argument("--no-orig", action="store_true", help="skip the raw-series columns")

    p = sub.add_parser("permtest", help="informative counts under shuffled targets")
    _add_common(p, regressors=False)
    p.add_argument("--trials", type=_pos_int, default=10)
    p.add_argument("--no-control", action="store_true")

    p = sub.add_parser("dump-store", help="write secondary tables as CSV")
    p.add_argument("--train", required=True)
    p.add_argument("--train-targets")
    p.add_argument("--transforms", type=_kinds, default=parse_kinds("all"))
    p.add_argument("--table", action="append", default=[], help="table name such as TS1D (repeatable)")
    p.add_argument("--out", default="ifx-store")

    p = sub.add_parser("gen-synth", help="write a seeded synthetic train/test pair")
    p.add_argument("--out", default="synth")
    p.add_argument("--n-train", type=_pos_int, default=200)
    p.add_argument("--n-test", type=_pos_int, default=100)
    p.add_argument("--dims", type=_pos_int, default=2)
    p.add_argument("--length", type=_pos_int, default=64)
    p.add_argument("--noise", type=_nonneg_float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-signal", action="store_true", help="targets independent of the series")
    return parser


def _config(args, **extra):
    try:
        return _make_config(args, **extra)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _make_config(args, **extra):
    return RunConfig(
        train=args.train,
        test=getattr(args, "test", None),
        train_targets=args.train_targets,
        test_targets=getattr(args, "test_targets", None),
        k=args.k,
        seed=args.seed,
        kinds=args.transforms,
        min_level=args.min_level,
        out=args.out,
        threads=args.threads,
        p_sel=args.p_sel,
        quantile_grid=args.quantile_grid,
        n_trees=getattr(args, "n_trees", 100),
        max_depth=getattr(args, "max_depth", None),
        min_leaf=getattr(args, "min_leaf", 1),
        **extra,
    )


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0].replace("_TRAIN", "")


def cmd_run(args):
    report = run(_config(args, regressor=args.regressor))
    line = f"{report['informative_count']}/{report['k_generated']} informative features"
    if "rmse_test" in report:
        line += f", test RMSE {report['rmse_test']:.6g} (baseline {report['rmse_baseline_test']:.6g})"
    print(line)
    print(f"artifacts written to {args.out}")


def cmd_benchmark(args):
    pairs = list(args.data)
    if args.test:
        pairs.insert(0, [args.train, args.test])
    if not pairs:
        raise UsageError("benchmark needs --test or at least one --data TRAIN TEST")
    try:
        ks = [int(k) for k in args.ks.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"bad --ks {args.ks!r}") from None
    regs = [r.strip() for r in args.regressor.split(",") if r.strip()]
    bad = [r for r in regs if r not in ("tree", "forest")]
    if bad or not regs:
        raise UsageError(f"--regressor must list tree and/or forest, got {args.regressor!r}")
    base = _config(args, regressor=regs[0])
    datasets = [(_stem(tr), tr, te) for tr, te in pairs]
    report = benchmark(datasets, ks=ks, regressors=regs, base=base,
                       include_orig=not args.no_orig, out=args.out)
    with open(os.path.join(args.out, "benchmark.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    if report["failures"] and not report["rows"]:
        raise DataError("every dataset failed")


def cmd_permtest(args):
    report = permutation_test(_config(args), trials=args.trials, control=not args.no_control)
    print(f"informative counts over {args.trials} shuffles: {report['informative_counts']}")
    if "control_informative_count" in report:
        print(f"control (true targets): {report['control_informative_count']}")


def cmd_dump_store(args):
    ds = load_dataset(args.train, args.train_targets)
    store = build_store(ds, args.transforms)
    names = args.table or [t.name for t in store.table_ids]
    os.makedirs(args.out, exist_ok=True)
    for name in names:
        try:
            table = store.table(name)
        except (KeyError, ValueError):
            raise UsageError(f"no table {name!r}; available: {' '.join(t.name for t in store.table_ids)}") from None
        path = os.path.join(args.out, f"{name}.csv")
        dump_table_csv(table, path)
        print(path)


def cmd_gen_synth(args):
    train, test = make_split(
        n_train=args.n_train, n_test=args.n_test, dims=args.dims, length=args.length,
        seed=args.seed, noise=args.noise, informative=not args.no_signal,
    )
    os.makedirs(args.out, exist_ok=True)
    for part, ds in (("TRAIN", train), ("TEST", test)):
        path = os.path.join(args.out, f"Synthetic_{part}.ts")
        write_ts_file(ds, path)
        print(path)


COMMANDS = {
    "run": cmd_run,
    "benchmark": cmd_benchmark,
    "permtest": cmd_permtest,
    "dump-store": cmd_dump_store,
    "gen-synth": cmd_gen_synth,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ifx: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"ifx: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IfxError as exc:
        print(f"ifx: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"ifx: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
