"""Shared fixtures and the acceptance-criterion summary.

Tests tagged ``@pytest.mark.criterion("N. title")`` are grouped; after the
run one PASS/FAIL line per criterion is printed (FAIL if any test in the
group failed or errored, SKIP if every test in it was skipped).
"""

from collections import OrderedDict
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "nrmi_mix" / "data"

_criteria: "OrderedDict[str, list]" = OrderedDict()
_notes: "OrderedDict[str, list]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test gates")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criteria.setdefault(mark.args[0], [])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "skipped" if rep.skipped else ("passed" if rep.passed else "failed")
        _criteria.setdefault(mark.args[0], []).append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, results in sorted(_criteria.items()):
        if not results:
            continue
        statuses = [s for _, s in results]
        if "failed" in statuses:
            verdict = "FAIL"
        elif all(s == "skipped" for s in statuses):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        failed = [n for n, s in results if s == "failed"]
        extra = f"  (failing: {', '.join(failed)})" if failed else ""
        tr.write_line(f"{verdict}  {name}{extra}")
        for line in _notes.get(name, []):
            tr.write_line(f"        {line}")


@pytest.fixture
def note(request):
    """Record a measured value under the test's acceptance criterion in the summary."""
    mark = request.node.get_closest_marker("criterion")
    key = mark.args[0] if mark else request.node.name

    def _note(text: str) -> None:
        _notes.setdefault(key, []).append(text)
    return _note


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def galaxy():
    return np.loadtxt(DATA_DIR / "galaxy.csv", skiprows=1)
