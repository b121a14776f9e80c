import logging

import numpy as np
import pytest

from perftx import _kernels

BACKENDS = ["numpy"] + (["cython"] if _kernels.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel core."""
    core = _kernels.get_backend(request.param)

    def contiguous(fn):
        return lambda *a: fn(*(np.ascontiguousarray(x, dtype=np.float64) for x in a))

    for name in ("se_cross", "se_gram", "weighted_sqdist_sums"):
        monkeypatch.setattr(_kernels, name, contiguous(getattr(core, name)))
    return request.param


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR, logger="perftx")


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion at the end of the run

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    mark = getattr(report, "_acceptance", None)
    if mark is None:
        return
    number, title = mark
    failed = report.failed
    if report.when == "call" or failed:
        prev = _ACCEPTANCE.get(number)
        outcome = "FAIL" if failed or (prev and prev[1] == "FAIL") else (
            "SKIP" if report.skipped else "PASS")
        _ACCEPTANCE[number] = (title, outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report._acceptance = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{outcome} criterion {number:>2}: {title}")
