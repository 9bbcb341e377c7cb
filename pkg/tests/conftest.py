import numpy as np
import pytest

from pmeans import DiscreteMeasure, make_manifold


@pytest.fixture
def circle():
    return make_manifold("circle")


@pytest.fixture
def torus2():
    return make_manifold("torus:2")


@pytest.fixture
def sphere():
    return make_manifold("sphere")


@pytest.fixture
def two_atoms():
    """The running two-atom example: atoms {0, 0.4} on the circle, p = 2."""
    return DiscreteMeasure(np.array([[0.0], [0.4]]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
