import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import pytest

_RESULTS = pytest.StashKey()
N_CRITERIA = 11


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(pytestconfig):
    """``record(n, ok, detail)`` logs one acceptance line and returns ``ok``."""
    results = pytestconfig.stash[_RESULTS]

    def record(n, status, detail):
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        line = f"criterion {n:>2}: {status}  {detail}"
        results[n] = line
        print(line)
        return status != "FAIL"
    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(results.get(n, f"criterion {n:>2}: NOT RUN"))
