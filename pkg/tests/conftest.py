"""Shared pytest plumbing: per-criterion pass/fail lines for the acceptance suite."""

import pytest

ACCEPTANCE_FILE = "test_acceptance.py"
_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if ACCEPTANCE_FILE not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _results[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and (report.failed or report.skipped):
        _results[name] = "FAIL" if report.failed else "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_results):
        terminalreporter.write_line(f"{_results[name]:4s}  {name}")
