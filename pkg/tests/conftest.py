import numpy as np
import pytest

from starnoma.scenario import ScenarioConfig, build_channel_set
from starnoma.system import SystemModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def default_config():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def small_config():
    """Two clusters of two users, one per side; quick enough for solver tests."""
    return ScenarioConfig(
        cluster_centers=((0.0, 35.0, 0.0), (0.0, 25.0, 0.0)),
        users_per_cluster=(2, 2),
        num_elements=6,
    )


@pytest.fixture
def small_model(small_config):
    ch = build_channel_set(small_config, 3)
    return SystemModel.from_config(small_config, ch)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("ab:"))):
            terminalreporter.write_line(line)
