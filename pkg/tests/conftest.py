import numpy as np
import pytest

from cirfilter.model import ModelParams

# (alpha, mu0, beta, phi); the first set is the reference configuration, the
# last violates the positivity condition alpha*mu0 >= beta^2/2.
PARAM_SETS = [
    (0.5, 0.4, 0.5, 4.0),
    (1.0, 0.8, 0.6, 2.0),
    (0.3, 1.2, 0.9, 1.5),
]

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fig1():
    return ModelParams(0.5, 0.4, 0.5), 4.0


@pytest.fixture(params=PARAM_SETS, ids=["fig1", "set2", "set3"])
def param_set(request):
    a, mu0, b, phi = request.param
    return ModelParams(a, mu0, b), phi


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
