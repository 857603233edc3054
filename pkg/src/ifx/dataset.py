"""TSER datasets: data model, archive (.ts) and long-CSV readers and writers."""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, EmptyDataset, ParseError
from .transforms import Channel

__all__ = [
    "Series",
    "TimeSeriesDataset",
    "ValidationReport",
    "parse_ts_file",
    "write_ts_file",
    "parse_csv_pair",
    "write_csv_pair",
    "load_dataset",
    "validate",
    "MIN_LENGTH",
]

MIN_LENGTH = 3
_MISSING_TOKENS = {"?", "nan", "NaN", "NA", ""}


@dataclass(frozen=True)
class Series:
    id: int
    dims: tuple

    @property
    def lengths(self):
        return tuple(len(c) for c in self.dims)


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """``n`` labelled multivariate series sharing ``dim_count`` dimensions."""

    name: str
    series: tuple
    targets: np.ndarray
    dim_count: int

    def __post_init__(self):
        targets = np.array(self.targets, dtype=float)
        targets.flags.writeable = False
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "series", tuple(self.series))

    @property
    def n(self):
        return len(self.series)

    @property
    def ids(self):
        return [s.id for s in self.series]

    def with_targets(self, targets):
        return TimeSeriesDataset(self.name, self.series, targets, self.dim_count)

    def subset(self, index):
        index = list(index)
        return TimeSeriesDataset(
            self.name,
            [self.series[i] for i in index],
            self.targets[index],
            self.dim_count,
        )


@dataclass
class ValidationReport:
    problems: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.problems

    def __len__(self):
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def __str__(self):
        return "valid" if self.ok else "\n".join(self.problems)


def validate(ds):
    """Check dataset invariants; an empty report means the dataset is valid."""
    report = ValidationReport()
    problems = report.problems
    if ds.n < 1:
        problems.append("dataset has no series")
    if len(ds.targets) != ds.n:
        problems.append(f"{ds.n} series but {len(ds.targets)} targets")
    if ds.dim_count < 1:
        problems.append("dim_count must be positive")
    for i, y in enumerate(ds.targets):
        if not math.isfinite(y):
            sid = ds.series[i].id if i < ds.n else i
            problems.append(f"series {sid}: non-finite target {y!r}")
    seen = set()
    for s in ds.series:
        if s.id in seen:
            problems.append(f"series {s.id}: duplicate id")
        seen.add(s.id)
        if len(s.dims) != ds.dim_count:
            problems.append(
                f"series {s.id}: {len(s.dims)} dimensions, expected {ds.dim_count}"
            )
        for k, c in enumerate(s.dims, start=1):
            if len(c) < MIN_LENGTH:
                problems.append(
                    f"series {s.id}, dimension {k}: length < {MIN_LENGTH} ({len(c)})"
                )
            if len(c) > 1 and not np.all(np.diff(c.axis) > 0):
                problems.append(
                    f"series {s.id}, dimension {k}: timestamps not strictly increasing"
                )
            if not np.all(np.isfinite(c.value)):
                problems.append(f"series {s.id}, dimension {k}: non-finite value")
    return report


# --------------------------------------------------------------------------
# .ts archive format


def _parse_bool(token, path, lineno, tag):
    token = token.lower()
    if token == "true":
        return True
    if token == "false":
        return False
    raise ParseError(f"{tag} expects true/false, got {token!r}", path, lineno)


def _parse_float(token, path, lineno, what):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"non-numeric {what} {token!r}", path, lineno) from None


def _parse_plain_channel(text, path, lineno):
    times, values = [], []
    for i, tok in enumerate(text.split(",")):
        tok = tok.strip()
        if tok in _MISSING_TOKENS:
            continue
        v = _parse_float(tok, path, lineno, "value")
        if math.isnan(v):
            continue
        times.append(float(i))
        values.append(v)
    return Channel(np.array(times), np.array(values))


def _parse_stamped_channel(text, path, lineno):
    # "(t1,v1),(t2,v2),..."
    times, values = [], []
    text = text.strip()
    if not text:
        return Channel(np.array([]), np.array([]))
    for chunk in text.split(")"):
        chunk = chunk.strip().lstrip(",").strip()
        if not chunk:
            continue
        if not chunk.startswith("("):
            raise ParseError(f"malformed timestamped point {chunk!r}", path, lineno)
        t_tok, sep, v_tok = chunk[1:].rpartition(",")
        if not sep:
            raise ParseError(f"malformed timestamped point {chunk!r}", path, lineno)
        v_tok = v_tok.strip()
        if v_tok in _MISSING_TOKENS:
            continue
        t = _parse_float(t_tok.strip(), path, lineno, "timestamp")
        v = _parse_float(v_tok, path, lineno, "value")
        if math.isnan(v):
            continue
        times.append(t)
        values.append(v)
    order = np.argsort(times, kind="stable")
    return Channel(np.asarray(times)[order], np.asarray(values)[order])


def _split_stamped_line(line):
    # dimension separators are the ':' characters outside parentheses
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(line):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == ":" and depth == 0:
            parts.append(line[start:i])
            start = i + 1
    parts.append(line[start:])
    return parts


def parse_ts_file(path, name=None):
    """Read a regression problem in the TSER archive ``.ts`` format.

    The header must contain ``@targetlabel true`` (a ``@classlabel true``
    header is rejected). Each line after ``@data`` holds one series: dimension
    channels separated by ``:``, comma separated values, and the target as
    the last ``:`` token. Without ``@timestamps true`` points are indexed
    0, 1, 2, ... Missing values (``?``/``NaN``) are dropped from their channel.
    """
    path = os.fspath(path)
    meta = {"timestamps": False, "target": None, "problem": None, "dimensions": None}
    series, targets = [], []
    in_data = False
    data_line = None
    dim_count = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise ParseError("expected a header tag or @data", path, lineno)
                tokens = line.split()
                tag = tokens[0].lower()
                if tag == "@data":
                    if meta["target"] is not True:
                        raise ParseError(
                            "header does not declare regression targets "
                            "(@targetlabel true)",
                            path,
                            lineno,
                        )
                    in_data = True
                    data_line = lineno
                    continue
                if tag in ("@timestamps", "@targetlabel", "@classlabel",
                           "@univariate", "@equallength", "@missing"):
                    if len(tokens) < 2:
                        raise ParseError(f"{tokens[0]} needs a value", path, lineno)
                    flag = _parse_bool(tokens[1], path, lineno, tokens[0])
                    if tag == "@timestamps":
                        meta["timestamps"] = flag
                    elif tag == "@targetlabel":
                        meta["target"] = flag
                    elif tag == "@classlabel" and flag:
                        raise ParseError(
                            "classification data is not supported", path, lineno
                        )
                elif tag == "@problemname":
                    meta["problem"] = " ".join(tokens[1:]) or None
                elif tag == "@dimensions":
                    try:
                        meta["dimensions"] = int(tokens[1])
                    except (IndexError, ValueError):
                        raise ParseError("@dimensions needs an integer", path, lineno) from None
                # other tags (@serieslength, ...) carry nothing we need
                continue

            if meta["timestamps"]:
                parts = _split_stamped_line(line)
            else:
                parts = line.split(":")
            if len(parts) < 2:
                raise ParseError("expected at least one dimension and a target", path, lineno)
            y = _parse_float(parts[-1].strip(), path, lineno, "target")
            if not math.isfinite(y):
                raise ParseError(f"non-finite target {parts[-1].strip()!r}", path, lineno)
            reader = _parse_stamped_channel if meta["timestamps"] else _parse_plain_channel
            dims = tuple(reader(p, path, lineno) for p in parts[:-1])
            for k, c in enumerate(dims, start=1):
                if len(c) < MIN_LENGTH:
                    raise ParseError(
                        f"dimension {k} has {len(c)} points, need at least {MIN_LENGTH}",
                        path, lineno,
                    )
                if not np.all(np.diff(c.axis) > 0):
                    raise ParseError(f"dimension {k} repeats a timestamp", path, lineno)
                if not np.all(np.isfinite(c.value)):
                    raise ParseError(f"dimension {k} has an infinite value", path, lineno)
            if dim_count is None:
                dim_count = len(dims)
            elif len(dims) != dim_count:
                raise ParseError(
                    f"{len(dims)} dimensions, expected {dim_count}", path, lineno
                )
            series.append(Series(len(series), dims))
            targets.append(y)

    if not in_data:
        raise ParseError("no @data section", path)
    if not series:
        raise EmptyDataset(f"{path}: no series after @data (line {data_line})")
    if meta["dimensions"] is not None and meta["dimensions"] != dim_count:
        raise ParseError(
            f"header declares {meta['dimensions']} dimensions, data has {dim_count}", path
        )
    if name is None:
        name = meta["problem"] or os.path.splitext(os.path.basename(path))[0]
    return TimeSeriesDataset(name, series, targets, dim_count)


def _is_index_axis(c):
    return np.array_equal(c.axis, np.arange(len(c), dtype=float))


def write_ts_file(ds, path):
    """Write ``ds`` in the ``.ts`` format; values are written round-trip exact."""
    stamped = not all(_is_index_axis(c) for s in ds.series for c in s.dims)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"@problemName {ds.name}\n")
        fh.write(f"@timeStamps {'true' if stamped else 'false'}\n")
        fh.write("@missing false\n")
        fh.write(f"@univariate {'true' if ds.dim_count == 1 else 'false'}\n")
        fh.write(f"@dimensions {ds.dim_count}\n")
        lengths = {len(c) for s in ds.series for c in s.dims}
        fh.write(f"@equalLength {'true' if len(lengths) == 1 else 'false'}\n")
        if len(lengths) == 1:
            fh.write(f"@seriesLength {lengths.pop()}\n")
        fh.write("@targetLabel true\n")
        fh.write("@data\n")
        for s, y in zip(ds.series, ds.targets):
            if stamped:
                chans = [
                    ",".join(f"({t!r},{v!r})" for t, v in zip(c.axis.tolist(), c.value.tolist()))
                    for c in s.dims
                ]
            else:
                chans = [",".join(repr(v) for v in c.value.tolist()) for c in s.dims]
            fh.write(":".join(chans) + f":{float(y)!r}\n")


# --------------------------------------------------------------------------
# long-format CSV pair


def _read_csv_rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("missing header row", path, 1)
        header = [h.strip() for h in reader.fieldnames]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", path, 1)
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _int_field(row, key, path, lineno):
    try:
        return int(row[key])
    except (TypeError, ValueError):
        raise ParseError(f"{key} must be an integer, got {row[key]!r}", path, lineno) from None


def parse_csv_pair(values_path, targets_path, name=None):
    """Assemble a dataset from long-format values and a target table.

    ``values_path`` has columns ``series_id,dim,timestamp,value``;
    ``targets_path`` has ``series_id,target``. Series keep the order of their
    first appearance in the values file; dimensions are ordered by ``dim``.
    """
    values_path = os.fspath(values_path)
    targets_path = os.fspath(targets_path)
    points = {}
    order = []
    dims_seen = set()
    for lineno, row in _read_csv_rows(values_path, ("series_id", "dim", "timestamp", "value")):
        sid = _int_field(row, "series_id", values_path, lineno)
        dim = _int_field(row, "dim", values_path, lineno)
        t = _parse_float(row["timestamp"], values_path, lineno, "timestamp")
        v = _parse_float(row["value"], values_path, lineno, "value")
        if sid not in points:
            points[sid] = {}
            order.append(sid)
        chan = points[sid].setdefault(dim, {})
        if t in chan:
            raise ConsistencyError(
                f"{values_path}:{lineno}: duplicate point (series {sid}, dim {dim}, t={t!r})"
            )
        chan[t] = v
        dims_seen.add(dim)

    targets = {}
    for lineno, row in _read_csv_rows(targets_path, ("series_id", "target")):
        sid = _int_field(row, "series_id", targets_path, lineno)
        if sid in targets:
            raise ConsistencyError(f"{targets_path}:{lineno}: duplicate series_id {sid}")
        targets[sid] = _parse_float(row["target"], targets_path, lineno, "target")

    if not order and not targets:
        raise EmptyDataset(f"{values_path}: no series")
    extra_values = [s for s in order if s not in targets]
    extra_targets = sorted(set(targets) - set(points))
    if extra_values:
        raise ConsistencyError(f"series without target: {extra_values[:10]}")
    if extra_targets:
        raise ConsistencyError(f"targets without series: {extra_targets[:10]}")

    dims = sorted(dims_seen)
    series = []
    for sid in order:
        chans = []
        for d in dims:
            pts = points[sid].get(d)
            if pts is None:
                raise ConsistencyError(f"series {sid} has no points for dim {d}")
            ts = np.array(sorted(pts))
            chans.append(Channel(ts, np.array([pts[t] for t in ts.tolist()])))
        series.append(Series(sid, tuple(chans)))
    if name is None:
        name = os.path.splitext(os.path.basename(values_path))[0]
    return TimeSeriesDataset(name, series, [targets[s] for s in order], len(dims))


def write_csv_pair(ds, values_path, targets_path):
    with open(values_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "dim", "timestamp", "value"])
        for s in ds.series:
            for k, c in enumerate(s.dims, start=1):
                for t, v in zip(c.axis.tolist(), c.value.tolist()):
                    w.writerow([s.id, k, repr(t), repr(v)])
    with open(targets_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "target"])
        for s, y in zip(ds.series, ds.targets.tolist()):
            w.writerow([s.id, repr(y)])


def load_dataset(path, targets_path=None):
    """Load a ``.ts`` file, or a long CSV when ``targets_path`` is given."""
    if targets_path is not None:
        return parse_csv_pair(path, targets_path)
    return parse_ts_file(path)
