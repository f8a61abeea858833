"""Shared pytest options and the per-criterion acceptance summary."""

import os
from collections import defaultdict

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

_outcomes = defaultdict(list)
_titles = {}
_reasons = defaultdict(list)


def pytest_addoption(parser):
    group = parser.getgroup("causalgen")
    group.addoption(
        "--runs",
        default=os.path.join(ROOT, "runs"),
        help="directory holding reproduction runs as <preset>/seed<N>/loss.csv",
    )
    group.addoption(
        "--corpus",
        default=os.path.join(ROOT, "data", "shakespeare_char"),
        help="prepared tiny Shakespeare cache (train.bin, val.bin, vocab.json)",
    )
    group.addoption(
        "--reproduce",
        action="store_true",
        help="train missing reproduction runs (hours on a CPU) instead of failing",
    )
    group.addoption("--long", action="store_true", help="run the optional middle-setting suite")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[marker].append(report.outcome)
        if report.outcome == "failed" and report.longrepr is not None:
            text = getattr(report.longrepr, "reprcrash", None)
            _reasons[marker].append(text.message.splitlines()[0] if text else str(report.longrepr)[:200])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        number, title = mark.args
        _titles[number] = title
        report.criterion = number


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_titles):
        outcomes = _outcomes.get(number, [])
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        elif outcomes:
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        line = f"criterion {number:>2} {verdict:<4} {_titles[number]}"
        if verdict == "FAIL" and _reasons[number]:
            line += f" -- {_reasons[number][0]}"
        tr.write_line(line)
