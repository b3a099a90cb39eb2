import numpy as np
import pytest

from hslab.limit import k_sweep
from hslab.scenarios import builtin
from hslab.solver import run

SWEEP_KS = [10, 20, 40, 80]


@pytest.fixture(scope="session")
def fig1():
    return builtin("fig1")


@pytest.fixture(scope="session")
def fig1_sweep(fig1):
    return k_sweep(fig1, SWEEP_KS)


@pytest.fixture(scope="session")
def drift_runs():
    sc = builtin("drift-source")
    grid = sc.grid()
    rho0 = sc.initial(grid)
    return [run(sc.spec, grid, rho0, sc.config(k)) for k in SWEEP_KS]


@pytest.fixture(scope="session")
def saturated80():
    sc = builtin("fig1-saturated")
    grid = sc.grid()
    return run(sc.spec, grid, sc.initial(grid), sc.config(80))


@pytest.fixture(scope="session")
def radial80():
    sc = builtin("radial-source")
    grid = sc.grid()
    return run(sc.spec, grid, sc.initial(grid), sc.config(80))


@pytest.fixture(scope="session")
def barenblatt_run():
    sc = builtin("pme-barenblatt")
    grid = sc.grid()
    return sc, run(sc.spec, grid, sc.initial(grid), sc.config())


def rng(seed=0):
    return np.random.default_rng(seed)


_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: ``record(n, passed, detail)``; prints it and asserts."""

    def record(n, passed, detail):
        line = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((n, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
