import numpy as np
import pytest

from helpers import cv_config


@pytest.fixture
def config():
    return cv_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or report.failed or report.skipped:
        # several tests may share one criterion number; any failure fails it
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _, prev, secs = _ACCEPTANCE.get(number, (title, "PASS", 0.0))
        if prev != "PASS":
            status = prev
        _ACCEPTANCE[number] = (title, status, secs + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({secs:.2f} s)")
