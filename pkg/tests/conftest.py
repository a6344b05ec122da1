import time

import numpy as np
import pytest

from capbern.grid import GridSpec, ScalarField
from capbern.linearize import SweepConfig, linearization_sweep
from capbern.minimize import Schedule, minimize_bernoulli

SWEEP_THETAS = (0.4, 0.2, 0.1, 0.05)


def planar_field(grid, slope=1.0, shift=0.0):
    return ScalarField.from_function(grid, lambda *x: slope * np.maximum(x[0] - shift, 0.0))


@pytest.fixture(scope="session")
def grid128():
    return GridSpec.box(2, 1.0, 1 / 128)


@pytest.fixture(scope="session")
def grid64():
    return GridSpec.box(2, 1.0, 1 / 64)


@pytest.fixture(scope="session")
def bernoulli_planar_128(grid128):
    return minimize_bernoulli(planar_field(grid128), Schedule.default(grid128.h))


@pytest.fixture(scope="session")
def sweep_128_timed(grid128):
    t0 = time.perf_counter()
    rep = linearization_sweep(SweepConfig(SWEEP_THETAS, grid128))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sweep_128(sweep_128_timed):
    return sweep_128_timed[0]


@pytest.fixture(scope="session")
def minimizer_hodograph_02(grid128):
    from capbern.hodograph import minimizer_hodograph

    return minimizer_hodograph(grid128, 0.2)


@pytest.fixture(scope="session")
def flat_link_16k():
    from capbern.link import flat_link

    return flat_link(0.3, 6)


# acceptance criterion outcomes, reported in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class criterion:
    """Record PASS/FAIL for an acceptance criterion around a block of assertions."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        ACCEPTANCE[self.number] = (ok, self.title)
        print(f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title}")
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}")
