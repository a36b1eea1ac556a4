import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marginalmap import PairwiseModel, random_model, weather_model
from marginalmap.baselines import (EmOptions, TabooOptions, default_sequential_init, e_step, hamming_neighbors,
                                   run_em, run_taboo, taboo_search)
from marginalmap.oracle import map_exact, marginal_map_exact, q_value

from conftest import loopy_model, tree_model


def test_em_weather():
    rep = run_em(weather_model(), EmOptions(init=np.array([1])))
    assert list(rep.decode) == [1] and rep.q_value == pytest.approx(np.log(0.6))
    tau = e_step(weather_model(), np.array([0]))
    np.testing.assert_allclose(tau[1], [1 / 8, 7 / 8])
    rep = run_em(weather_model(), EmOptions(init=np.array([0])))
    assert rep.info["init"] == "given" and rep.decode[0] in (0, 1)


def test_em_decoupled_and_pure_max():
    rng = np.random.default_rng(0)
    m = random_model(rng, 4, [(0, 1), (2, 3)], card=3, roles=["sum", "sum", "max", "max"])
    rep = run_em(m, EmOptions(init=np.array([0, 0])))
    sub = PairwiseModel(m.cards[2:], m.node_logpot[2:], [(0, 1)], [m.edge_logpot[1]], [True, True])
    assert list(rep.decode) == list(map_exact(sub)[0])
    assert rep.iterations <= 3
    allmax = m.with_roles([True] * 4)
    assert list(run_em(allmax).decode) == list(map_exact(allmax)[0])


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_em_exact_steps_ascend(seed):
    m = loopy_model(seed, card=3)
    if len(m.max_nodes) == 0:
        return
    rep = run_em(m, EmOptions(num_random_inits=1, use_sum_product_init=False, seed=seed))
    for run in rep.info["runs"]:
        q = run["q_trace"]
        assert all(b >= a - 1e-9 for a, b in zip(q, q[1:]))


def test_em_options_validation():
    with pytest.raises(ValueError):
        EmOptions(max_rounds=0)
    with pytest.raises(ValueError):
        EmOptions(e_step="gibbs")


def test_taboo_weather():
    for x0 in ([0], [1]):
        x, q, steps = taboo_search(weather_model(), np.array(x0), 2)
        assert list(x) == [1] and q == pytest.approx(np.log(0.6))


def test_taboo_zero_coupling():
    rng = np.random.default_rng(1)
    m = random_model(rng, 4, [(0, 1), (2, 3)], card=3, sigma=0.0, roles=["sum", "max", "sum", "max"])
    rep = run_taboo(m)
    assert list(rep.decode) == [int(np.argmax(m.node_logpot[1])), int(np.argmax(m.node_logpot[3]))]


def test_taboo_from_optimum_keeps_it():
    m = tree_model(3, n=8, card=3)
    x, v = marginal_map_exact(m)
    rep = run_taboo(m, TabooOptions(init=x, max_steps=5))
    assert rep.q_value == pytest.approx(v)


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6))
def test_taboo_complete_with_enough_steps(seed):
    m = loopy_model(seed, n=6, card=2, p=0.5)
    if len(m.max_nodes) == 0:
        return
    size = int(np.prod(m.cards[m.max_nodes]))
    x, q, _ = taboo_search(m, np.zeros(len(m.max_nodes), dtype=np.int64), size)
    assert q == pytest.approx(marginal_map_exact(m)[1], abs=1e-12)


def test_hamming_neighbors_order():
    nb = hamming_neighbors(np.array([0, 2]), np.array([2, 3]))
    assert nb.tolist() == [[1, 2], [0, 0], [0, 1]]


def test_sequential_init():
    assert list(default_sequential_init(weather_model())) == [1]
    m = PairwiseModel([2, 2, 2], None, [(0, 1), (1, 2)], [np.zeros((2, 2))] * 2, ["max", "sum", "max"])
    assert list(default_sequential_init(m)) == [0, 0]
    assert len(default_sequential_init(m.with_roles([False] * 3))) == 0


def test_taboo_options_validation():
    with pytest.raises(ValueError):
        TabooOptions(max_steps=0)
