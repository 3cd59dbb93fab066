import time

import pytest

from matrixsrc.config import apply_values
from matrixsrc.simulation import SimConfig, run_simulation

GRID_PERIOD = 1 / 60
# the sliding LF-period average trims half a window at each end, so a full
# grid period of averaged data needs a little extra simulated time
PAD = 1.3e-3


def make_cfg(**values) -> SimConfig:
    """Default config with dotted keys given as ``tank__L=...``."""
    return apply_values(SimConfig(), {k.replace("__", "."): v for k, v in values.items()})


def timed_run(cfg):
    t0 = time.perf_counter()
    trace = run_simulation(cfg)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def warm_kernel():
    run_simulation(make_cfg(duration=2e-5))


@pytest.fixture(scope="session")
def grid_run(warm_kernel):
    """Closed-loop defaults over one grid period plus the averaging pad."""
    return timed_run(make_cfg(duration=GRID_PERIOD + PAD))


@pytest.fixture(scope="session")
def grid_trace(grid_run):
    return grid_run[0]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
