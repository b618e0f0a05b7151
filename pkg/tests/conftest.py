import numpy as np
import pytest

from pcesocp.basis import ParameterSpace, PolynomialBasis, Uniform


@pytest.fixture
def legendre_space():
    return ParameterSpace([Uniform(-1.0, 1.0)])


@pytest.fixture
def legendre2(legendre_space):
    return PolynomialBasis(legendre_space, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
