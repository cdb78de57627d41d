import functools
import time

import pytest

from cacbf.scenarios import build
from cacbf.simulator import run

# wall-clock seconds of each cached run, keyed like ``cached_run``
RUNTIMES = {}
# one "CRITERION n: PASS|FAIL ..." line per acceptance criterion, in execution order
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def cached_run(name: str, controller: str, dt: float = 1e-3):
    """Full-horizon default run, shared across test modules."""
    scenario = build(name)
    start = time.perf_counter()
    traj = run(scenario, controller, dt=dt)
    RUNTIMES[(name, controller, dt)] = time.perf_counter() - start
    return scenario, traj


@pytest.fixture(scope="session")
def simulate():
    return cached_run


@pytest.fixture(params=["acc", "omni", "drone"])
def scenario(request):
    return build(request.param)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
