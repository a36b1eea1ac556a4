import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from marginalmap import random_model
from marginalmap.io.generators import random_tree_edges

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tree_model(seed, n=6, card=2, sigma=1.0, roles=None):
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(n, rng)
    if roles is None:
        roles = rng.random(n) < 0.5
    return random_model(rng, n, edges, card=card, sigma=sigma, roles=roles)


def loopy_model(seed, n=5, card=2, sigma=1.0, p=0.6, roles=None):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    if roles is None:
        roles = rng.random(n) < 0.5
    return random_model(rng, n, edges, card=card, sigma=sigma, roles=roles)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
