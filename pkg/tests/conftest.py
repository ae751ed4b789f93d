import numpy as np
import pytest
from hypothesis import settings

from pgff.experiment import ExperimentConfig
from pgff.objectives import FitProblem
from pgff.plant import StribeckPlant, synthesize_dataset

settings.register_profile("pgff", deadline=None, max_examples=60)
settings.load_profile("pgff")


@pytest.fixture(scope="session")
def default_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def stribeck_dataset(default_config):
    return synthesize_dataset(default_config.references, default_config.plant)


@pytest.fixture(scope="session")
def linear_dataset(default_config):
    return synthesize_dataset(default_config.references, default_config.plant.linearized())


@pytest.fixture(scope="session")
def stribeck_problem(stribeck_dataset):
    return FitProblem(stribeck_dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def plant():
    return StribeckPlant()


# PASS/FAIL lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
