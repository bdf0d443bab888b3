import numpy as np
import pytest

from qwalk import ShiftSet, WalkSpec, coins

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_state(rng, c):
    v = rng.normal(size=c) + 1j * rng.normal(size=c)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def hadamard_1d():
    s = 1 / np.sqrt(2)
    return WalkSpec(ShiftSet.diagonal(1), coins.hadamard(), [s, 1j * s], "hadamard-1d")


@pytest.fixture(scope="session")
def grover_generic():
    return WalkSpec(ShiftSet.diagonal(2), coins.coin_grover_2d(), [1, 0, 0, 0], "grover")


@pytest.fixture(scope="session")
def grover_exceptional():
    return WalkSpec(ShiftSet.diagonal(2), coins.coin_grover_2d(),
                    coins.state_grover_exceptional(), "grover-exceptional")


@pytest.fixture(scope="session")
def fourier_generic():
    return WalkSpec(ShiftSet.diagonal(2), coins.coin_fourier_2d(), [1, 0, 0, 0], "fourier")


@pytest.fixture(scope="session")
def fourier_family():
    return WalkSpec(ShiftSet.diagonal(2), coins.coin_fourier_2d(),
                    coins.state_fourier_family(0.5, 0.5), "fourier-family")


@pytest.fixture(scope="session")
def hadamard_2d():
    return WalkSpec(ShiftSet.diagonal(2), coins.coin_tensor([coins.hadamard()] * 2),
                    [1, 0, 0, 0], "hadamard-x-hadamard")
