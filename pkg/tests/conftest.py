import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from heisrect.construction import build_chart  # noqa: E402
from heisrect.surface import parse  # noqa: E402


@pytest.fixture(scope="session")
def chart_factory():
    cache = {}

    def make(src, **kw):
        key = (src, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = build_chart(parse(src), **kw)
        return cache[key]

    return make


_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        outcome, secs = _CRITERIA[name]
        terminalreporter.write_line(f"{outcome}  {name}  ({secs:.1f}s)")
