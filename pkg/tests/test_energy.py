import numpy as np
import pytest
from hypothesis import given, strategies as st

from marginalmap import ConsistencyError, PairwiseModel, random_model, weather_model
from marginalmap.beliefs import BeliefSet, point_mass_beliefs, uniform_beliefs
from marginalmap.energy import (EntropyWeights, bethe_weights, convex_weights_B, default_num_trees,
                                eval_free_energy, sample_ab_trees, trw_upper_bound, trw_weights,
                                weighted_entropy)
from marginalmap.model import EDGE_CROSS, EDGE_MAX, energy, is_ab_tree
from marginalmap.oracle import (conditional_entropy_exact, joint_distribution, marginal_map_exact,
                                marginals_exact)
from marginalmap.mp import clamp_max_nodes

from conftest import loopy_model, tree_model


def comb_model(seed=0, n_chain=4):
    """Sum chain 0..n-1 with one pendant max node per chain node."""
    rng = np.random.default_rng(seed)
    edges = [(k, k + 1) for k in range(n_chain - 1)] + [(k, n_chain + k) for k in range(n_chain)]
    roles = [False] * n_chain + [True] * n_chain
    return random_model(rng, 2 * n_chain, edges, card=2, roles=roles)


def test_bethe_weights():
    m = loopy_model(0)
    w = bethe_weights(m)
    assert np.all(w.rho == 1.0)
    w0 = bethe_weights(m, 0.0)
    assert np.all(w0.w_node[m.is_max] == 0) and np.all(w0.w_node[~m.is_max] == 1)
    allsum = m.with_roles([False] * m.num_vars)
    w1 = bethe_weights(allsum, 1.0)
    assert np.all(w1.w_node == 1) and np.all(w1.w_pair == 1)


def test_weights_epsilon_one_makes_roles_irrelevant():
    m = loopy_model(1)
    w = trw_weights(m, 8, 0, epsilon=1.0)
    np.testing.assert_array_equal(w.w_node, np.ones(m.num_vars))
    np.testing.assert_array_equal(w.w_pair, w.rho)


def test_trw_chain_with_four_cross_edges():
    m = comb_model()
    w = trw_weights(m, 4, rng_seed=3)
    cross = m.edge_classes == EDGE_CROSS
    np.testing.assert_allclose(w.rho[~cross], 1.0)
    np.testing.assert_allclose(w.rho[cross], 0.25)
    assert default_num_trees(m) == 4


def test_trw_single_tree():
    m = comb_model()
    w = trw_weights(m, 1, rng_seed=5)
    assert set(np.unique(w.rho)) <= {0.0, 1.0}
    assert np.sum(w.rho[m.edge_classes == EDGE_CROSS]) == 1.0
    with pytest.raises(ValueError):
        trw_weights(m, 0)


@given(st.integers(0, 10 ** 6))
def test_sampled_trees_are_ab_trees(seed):
    m = loopy_model(seed, n=6)
    for tree in sample_ab_trees(m, 5, np.random.default_rng(seed)):
        sub = PairwiseModel(m.cards, m.node_logpot, [m.edges[e] for e in tree],
                            [m.edge_logpot[e] for e in tree], m.is_max)
        assert is_ab_tree(sub)[0]


def test_convex_weights_examples():
    iso = PairwiseModel([2, 2], roles=["max", "sum"])
    rho, cert = convex_weights_B(iso)
    assert cert.kappa_node == {0: 1.0}
    one = PairwiseModel([2, 2], None, [(0, 1)], [np.zeros((2, 2))], roles=["max", "max"])
    rho, cert = convex_weights_B(one)
    assert rho[0] == 1.0 and cert.kappa_node == {0: 0.5, 1: 0.5}
    assert cert.kappa_dir == {(0, 1): 0.5, (1, 0): 0.5}
    cyc = PairwiseModel([2] * 4, None, [(0, 1), (1, 2), (2, 3), (0, 3)], [np.zeros((2, 2))] * 4, [True] * 4)
    rho, cert = convex_weights_B(cyc)
    np.testing.assert_allclose(rho, 0.5)
    assert cert.residual(cyc, rho) < 1e-12


@given(st.integers(0, 10 ** 6))
def test_certificate_identities(seed):
    m = loopy_model(seed, n=6, p=0.7)
    rho, cert = convex_weights_B(m)
    assert cert.residual(m, rho) < 1e-12
    assert np.all(rho[m.edge_classes != EDGE_MAX] == 0)


def test_weights_json_round_trip():
    m = loopy_model(2)
    w = trw_weights(m, 6, 1, epsilon=0.3)
    w2 = EntropyWeights.from_json(m, w.to_json())
    np.testing.assert_array_equal(w.rho, w2.rho)
    assert w2.epsilon == 0.3 and w2.trees == w.trees
    assert (w.certificate is None) == (w2.certificate is None)


def test_free_energy_uniform_and_point_mass():
    m = PairwiseModel([2, 3, 2], None, [(0, 1), (1, 2)], [np.zeros((2, 3)), np.zeros((3, 2))])
    val = eval_free_energy(m, uniform_beliefs(m), bethe_weights(m, 1.0))
    assert val == pytest.approx(np.log(2) + np.log(3) + np.log(2))
    m = loopy_model(4)
    x = np.zeros(m.num_vars, dtype=int)
    x[1] = 1
    w = trw_weights(m, 3, 0, epsilon=0.5)
    assert eval_free_energy(m, point_mass_beliefs(m, x), w) == pytest.approx(energy(m, x))


def test_free_energy_weather_exact_marginals():
    m = weather_model()
    node, edge = marginals_exact(m)
    val = eval_free_energy(m, BeliefSet(node, edge), bethe_weights(m, 0.0))
    p = joint_distribution(m)
    e_theta = float(np.sum(p * np.log(p)))  # model is normalized, so theta = log p
    h = -e_theta
    hb = -(0.4 * np.log(0.4) + 0.6 * np.log(0.6))
    assert val == pytest.approx(e_theta + h - hb, abs=1e-12)
    assert val < np.log(0.6)


def test_free_energy_rejects_inconsistent():
    m = weather_model()
    b = uniform_beliefs(m)
    b.node[0] = np.array([0.9, 0.1])
    with pytest.raises(ConsistencyError) as info:
        eval_free_energy(m, b, bethe_weights(m))
    assert info.value.residual > 0.1


def ab_tree_model(seed):
    """Max nodes form a connected top of a random tree; every sum node hangs below them."""
    rng = np.random.default_rng(seed)
    n = 7
    edges = [(int(rng.integers(k)), k) for k in range(1, n)]
    k_max = int(rng.integers(1, 4))
    roles = [k < k_max for k in range(n)]
    # parents are earlier nodes, so max nodes (a prefix) never sit below a sum node
    return random_model(rng, n, edges, card=2, roles=roles)


@given(st.integers(0, 10 ** 6))
def test_bethe_exact_on_ab_trees(seed):
    m = ab_tree_model(seed)
    assert is_ab_tree(m)[0]
    x_star, phi = marginal_map_exact(m)
    node, edge = marginals_exact(clamp_max_nodes(m, x_star))
    val = eval_free_energy(m, BeliefSet(node, edge), bethe_weights(m, 0.0))
    assert val == pytest.approx(phi, abs=1e-8)


@given(st.integers(0, 10 ** 6))
def test_trw_entropy_bounds_conditional_entropy(seed):
    m = loopy_model(seed, n=5, p=0.7)
    B = list(m.max_nodes)
    w = trw_weights(m, 12, seed % 97)
    node, edge = marginals_exact(m)
    approx = weighted_entropy(m, BeliefSet(node, edge), w.w_node, w.w_pair)
    exact = conditional_entropy_exact(joint_distribution(m), B)
    assert approx >= exact - 1e-8


def test_trw_bound_flags():
    m = weather_model()
    w = trw_weights(m, 1)
    node, edge = marginals_exact(m)
    b = BeliefSet(node, edge)
    ok = trw_upper_bound(m, b, w, residual=0.0)
    assert ok.valid
    bad = trw_upper_bound(m, b, w, residual=1.0)
    assert not bad.valid and bad.value == ok.value
