import contextlib
import json

import pytest

from cbu.gateway import Gateway, MockBackend
from cbu.model import pools_from_candidates
from cbu.synthetic import make_dataset, make_script

ACCEPTANCE_NAMES = {
    1: "metric oracles",
    2: "AUC properties",
    3: "synthetic end-to-end CBU",
    4: "bootstrap curve",
    5: "probe correctness",
    6: "determinism",
    7: "prompt fidelity",
    8: "spearman",
}

_results: dict = {}


@contextlib.contextmanager
def _record(number: int, part: str):
    try:
        yield
    except BaseException as exc:
        _results.setdefault(number, []).append((part, False, f"{type(exc).__name__}: {exc}".splitlines()[0]))
        raise
    else:
        _results.setdefault(number, []).append((part, True, ""))


@pytest.fixture
def criterion():
    """``with criterion(3, "auc"):`` records a pass/fail line for the acceptance summary."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_NAMES):
        parts = _results.get(n)
        if not parts:
            tr.write_line(f"criterion {n} ({ACCEPTANCE_NAMES[n]}): NOT RUN")
            continue
        ok = all(p[1] for p in parts)
        failed = ", ".join(f"{p[0]} ({p[2]})" for p in parts if not p[1])
        line = f"criterion {n} ({ACCEPTANCE_NAMES[n]}): {'PASS' if ok else 'FAIL'}"
        tr.write_line(line if ok else f"{line} - {failed}")


@pytest.fixture(scope="session")
def synthetic():
    problems, candidates = make_dataset()
    return problems, candidates, pools_from_candidates(candidates)


@pytest.fixture
def mock_gateway():
    def build(script=None, cache=None, max_in_flight=8):
        gw = Gateway(cache=cache)
        gw.register("mock", MockBackend(script or make_script()), max_in_flight)
        return gw
    return build


def read_lines(path):
    return [json.loads(line) for line in open(path, encoding="utf-8") if line.strip()]
