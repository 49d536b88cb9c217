import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from codingmeasures import coding, shift
from codingmeasures.dynamics import ProductMap, RationalMap

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def z2():
    return RationalMap.polynomial([0, 0, 1])


@pytest.fixture(scope="session")
def cheb():
    return RationalMap.polynomial([-2, 0, 1])


@pytest.fixture(scope="session")
def z2_paths(z2):
    return coding.build_base_paths(z2, 2.0 + 0j, 0.02, np.random.default_rng(0))


@pytest.fixture(scope="session")
def z2_tree(z2, z2_paths):
    """Full z^2 tree from z = 2 to level 8, paths kept for reuse."""
    return coding.CodingTree(z2, 2.0 + 0j, z2_paths, keep_paths=True).extend_to(8)


@pytest.fixture(scope="session")
def chain():
    """Memory-2 potential with exp(phi) = [[2, 1], [1, 2]]."""
    return shift.FiniteRange(2, 2, np.log([2.0, 1.0, 1.0, 2.0]))


@pytest.fixture(scope="session")
def product_map():
    return ProductMap(RationalMap.polynomial([0, 0, 1]), RationalMap.polynomial([0, 0, 1]))
