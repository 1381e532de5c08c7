import itertools
import os

import pytest

from simshm.region import destroy_region

_counter = itertools.count()

_criterion_results = []


@pytest.fixture
def region_name():
    """Unique region name per test, removed afterwards."""
    name = f"/t_{os.getpid()}_{next(_counter)}"
    yield name
    destroy_region(name)


@pytest.fixture
def criterion():
    """Recorder for acceptance criteria; one summary line per criterion."""

    def record(name: str, passed: bool, detail: str = ""):
        _criterion_results.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criterion_results:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
