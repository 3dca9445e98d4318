import numpy as np
import pytest

from survequiv.cli import load_veteran
from survequiv.inference import fit_mle


@pytest.fixture(scope="session")
def veteran():
    return load_veteran()


@pytest.fixture(scope="session")
def veteran_fits(veteran):
    return tuple(fit_mle(s, "weibull", censoring_family="exponential") for s in veteran)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
