import numpy as np
import pytest

from choreeq.instance import CES, Instance, linear_instance


def random_linear(rng, n, m, lo=1.0, hi=10.0):
    return linear_instance(rng.uniform(lo, hi, size=(n, m)))


def random_ces(rng, n, m, rhos=(1.5, 2.0), lo=1.0, hi=10.0):
    C = rng.uniform(lo, hi, size=(n, m))
    specs = tuple(CES(tuple(map(float, row)), float(rng.choice(rhos))) for row in C)
    return Instance(n, m, specs)


def dirichlet_allocations(rng, n, m, k):
    """``k`` random allocations with exact column sums, shape ``(k, n, m)``."""
    return rng.dirichlet(np.ones(n), size=(k, m)).transpose(0, 2, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def sym2():
    return linear_instance([[1.0, 2.0], [2.0, 1.0]])
