import numpy as np
import pytest
from hypothesis import settings

from mdvi import GarnetParams, TabularMdp, generate, make_rng

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_mdp(seed: int, num_states: int = 5, num_actions: int = 3, discount: float = 0.9) -> TabularMdp:
    """Dense random MDP with action-dependent rewards in [0, 1)."""
    rng = np.random.default_rng(seed)
    kernel = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    return TabularMdp(kernel, rng.random((num_states, num_actions)), discount)


@pytest.fixture
def small_mdp():
    return random_mdp(0)


@pytest.fixture
def garnet():
    return generate(GarnetParams(), make_rng(0, 0))


# acceptance verdicts, printed after the run so they land in captured logs too
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
