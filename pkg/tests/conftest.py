import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ifx.dataset import write_ts_file  # noqa: E402
from ifx.synth import make_split, make_synthetic  # noqa: E402


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def two_line_ts(tmp_path):
    return write_text(
        tmp_path / "two.ts",
        "@problemName Two\n@timeStamps false\n@targetLabel true\n@data\n"
        "1,2,3:4,5,6:7.5\n2,3,4:5,6,7:8.0\n",
    )


@pytest.fixture(scope="session")
def small_synth():
    return make_synthetic(n=60, dims=2, length=24, seed=3)


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    train, test = make_split(n_train=80, n_test=40, dims=2, length=32, seed=5)
    tr, te = str(d / "Synthetic_TRAIN.ts"), str(d / "Synthetic_TEST.ts")
    write_ts_file(train, tr)
    write_ts_file(test, te)
    return tr, te


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    status = "PASS" if ok else "FAIL"
    if ok is None:
        status = "SKIP"
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
