import numpy as np
import pytest

from folisim import examples


@pytest.fixture(scope="session")
def linear2d():
    return examples.linear2d()


@pytest.fixture(scope="session")
def linear3d():
    return examples.linear3d()


@pytest.fixture(scope="session")
def deg2_p2():
    return examples.deg2_p2()


@pytest.fixture(scope="session")
def deg2_p3():
    return examples.deg2_p3()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
