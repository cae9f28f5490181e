import numpy as np
import pytest

from dgbench.elliptic import WeakProblem, boundary_function, make_coefficients, solve
from dgbench.energy import ConstantsLedger
from dgbench.geometry import BallDomain

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def disk():
    return BallDomain(2, 1.0, 1.0 / 32)


@pytest.fixture(scope="session")
def disk2():
    return BallDomain(2, 2.0, 1.0 / 32)


@pytest.fixture(scope="session")
def checker(disk):
    return make_coefficients("checkerboard", disk, 1.0, 10.0, seed=3)


@pytest.fixture(scope="session")
def checker_solution(checker):
    return solve(WeakProblem(checker, boundary_function("wave")))


@pytest.fixture(scope="session")
def ledger():
    return ConstantsLedger(1.0, 10.0, 2, 0.39)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
