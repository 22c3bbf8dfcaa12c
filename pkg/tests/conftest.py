import pytest

from rwre21.env import FamilySpec, SiteLaw


POINT_THETA = (0.2, 0.1)          # w(-1) = 0.2, w(-2) = 0.1, w(+1) = 0.7
DIRICHLET_THETA = (1.0, 1.0, 6.0)
MIXTURE_THETA = (0.5,)


@pytest.fixture
def point():
    return FamilySpec.point()


@pytest.fixture
def dirichlet():
    return FamilySpec.dirichlet()


@pytest.fixture
def mixture():
    return FamilySpec.mixture(((0.05, 0.15, 0.8), (0.2, 0.2, 0.6)))


@pytest.fixture
def omega():
    return SiteLaw(0.1, 0.2, 0.7)


# hand-checked path 0 -> 1 -> -1 -> 0 -> 1 -> 2 (target 2)
HAND_PATH = [0, 1, -1, 0, 1, 2]
