import functools

import pytest

from qsdlab import NoiseModel, assemble_annealed, assemble_conditioned, builtin, grid_for
from qsdlab.spectral import qsd_eigenpair, stationary_density

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def solved(name: str, delta: float, sigma: float, n: int):
    """Cached (model, L, R, rho, q) for a configuration shared across tests."""
    model = builtin(name, delta)
    grid = grid_for(model, n)
    L = assemble_annealed(model, NoiseModel(sigma), grid)
    R = assemble_conditioned(L)
    rho = stationary_density(L)
    q = qsd_eigenpair(R) if delta > 0 else rho
    return model, L, R, rho, q


@pytest.fixture(scope="session")
def solve():
    return solved
