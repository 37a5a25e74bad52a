"""Collects the one-line verdicts printed by the acceptance suite and repeats
them in the terminal summary, where they survive output capture."""

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._criteria = {}


@pytest.fixture
def verdict(request):
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config._criteria[number] = line
        print(line, flush=True)
        return passed

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed:
        n = marker.args[0]
        lines = item.config._criteria
        if n not in lines:
            err = call.excinfo.exconly().splitlines()[0] if call.excinfo else "error"
            lines[n] = f"criterion {n}: FAIL  {err}"


def pytest_terminal_summary(terminalreporter, config):
    lines = config._criteria
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
