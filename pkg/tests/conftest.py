import numpy as np
import pytest

from psmdp.envs import build_world, corridor_world


@pytest.fixture(scope="session")
def corridor():
    return build_world(corridor_world())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
