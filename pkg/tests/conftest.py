import numpy as np
import pytest

from mkvfit.models import linear_model
from mkvfit.simulate import ObservationGrid, SimConfig, simulate_panel

# lines printed by the acceptance suite, repeated in the terminal summary so
# they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def linear_panel():
    """A moderate linear-model panel shared by several modules."""
    return simulate_panel(linear_model(), (0.5, 1.0, 1.0), SimConfig(30, 10.0, 0.01, 11), ObservationGrid.from_step(10.0, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
