from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    _criteria[number]["title"] = title
    _criteria[number]["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        ok = entry["outcomes"] and all(o == "passed" for o in entry["outcomes"])
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"[{status}] criterion {number}: {entry['title']} ({len(entry['outcomes'])} checks)"
        )
