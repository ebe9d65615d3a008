import numpy as np
import pytest

from manakov_nfdm.core import FiberLink, TimeGrid, make_normalization
from manakov_nfdm.transceiver import SignalingPlan, map_bits


@pytest.fixture(scope="session")
def plan():
    return SignalingPlan()


@pytest.fixture(scope="session")
def link():
    return FiberLink()


@pytest.fixture(scope="session")
def nmap(plan, link):
    return make_normalization(link, plan.T0)


@pytest.fixture(scope="session")
def default_symbol(plan):
    """All-zero bits: phases (pi/4, pi/4, pi/2, pi/2)."""
    return map_bits(np.zeros(8, dtype=int), plan)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def slot_grid(n=2048, width=32.0):
    return TimeGrid.centered(n, width)
