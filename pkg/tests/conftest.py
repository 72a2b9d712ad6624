import numpy as np
import pytest

from medeq.scenarios import standard_slab


@pytest.fixture(scope="session")
def slab():
    """The standard Lorentz slab discretization (gamma = 0.1, K = 64)."""
    return standard_slab()


@pytest.fixture(scope="session")
def small_slab():
    """A coarse slab that keeps dense-matrix tests fast."""
    return standard_slab(k=16, n=48, lam_max=20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
