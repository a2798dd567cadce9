import numpy as np
import pytest

from pavd import rates


@pytest.fixture
def b2d1():
    """Constant rates b=2, d=1."""
    return rates.constant_model(2.0)


@pytest.fixture
def rao():
    """b=(1,2,3,...), d=(1,2,3/2,3/2,...)."""
    return rates.rao_model()


@pytest.fixture
def rdy1():
    """rao with d(0) lowered to 1/4."""
    return rates.rdy1_model()


@pytest.fixture
def affine_nodeath():
    """b(i)=i+1, d=0."""
    return rates.RateModel(b=rates.Affine(1.0, 1.0), d=rates.Constant(0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
