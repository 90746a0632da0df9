import pytest

from divbounds.model import ModelParams


@pytest.fixture
def ref():
    """Reference model used throughout the numerical illustrations."""
    return ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=1.0)


def ref_params(xi=1.0):
    return ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=xi)
