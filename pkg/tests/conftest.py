import numpy as np
import pytest

from ncelab.population import PopulationDistribution
from ncelab.scorers import TabularScorer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_population(rng, label_count=5, input_count=2):
    conditionals = rng.dirichlet(np.ones(label_count), size=input_count)
    input_marginal = rng.dirichlet(np.ones(input_count))
    return PopulationDistribution(input_marginal, conditionals)


def random_tabular(rng, label_count=5, input_count=2, scale=1.0):
    return TabularScorer(scale * rng.standard_normal((input_count, label_count)))


@pytest.fixture
def small_pop(rng):
    return random_population(rng)


@pytest.fixture
def small_scorer(rng):
    return random_tabular(rng)


def finite_difference(f, theta, eps=1e-6):
    """Central-difference gradient of a scalar function of a flat vector."""
    grad = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        d = np.zeros_like(theta)
        d[i] = eps
        grad[i] = (f(theta + d) - f(theta - d)) / (2 * eps)
    return grad
