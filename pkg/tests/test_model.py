import numpy as np
import pytest
from hypothesis import given, strategies as st

from marginalmap import (EDGE_CROSS, EDGE_MAX, EDGE_SUM, InvalidConfigurationError, PairwiseModel,
                         is_ab_tree, partition_edges, weather_model)
from marginalmap.model import energy
from marginalmap.io import gen_hmm

from conftest import loopy_model


def test_energy_zero_single_var():
    m = PairwiseModel([2], [np.zeros(2)])
    assert energy(m, [0]) == 0.0


def test_energy_weather_map_config():
    assert energy(weather_model(), [0, 1]) == pytest.approx(np.log(0.35), abs=1e-12)


def test_energy_table_lookup():
    m = PairwiseModel([2, 2], None, [(0, 1)], [np.log([[3, 1], [1, 2]])])
    assert energy(m, [0, 0]) == pytest.approx(np.log(3))


def test_energy_rejects_out_of_range():
    with pytest.raises(InvalidConfigurationError):
        energy(weather_model(), [2, 0])
    with pytest.raises(InvalidConfigurationError):
        energy(weather_model(), [-1, 0])


def test_constructor_rejects_bad_structure():
    with pytest.raises(ValueError):
        PairwiseModel([2, 2], None, [(0, 0)], [np.zeros((2, 2))])
    with pytest.raises(ValueError):
        PairwiseModel([2, 2], None, [(0, 1), (1, 0)], [np.zeros((2, 2))] * 2)
    with pytest.raises(ValueError):
        PairwiseModel([2, 2], None, [(0, 1)], [np.zeros((2, 3))])
    with pytest.raises(ValueError):
        PairwiseModel([2], [np.array([np.nan, 0.0])])
    with pytest.raises(ValueError):
        PairwiseModel([2], None, roles=["bogus"])


def test_models_are_immutable():
    m = weather_model()
    with pytest.raises(ValueError):
        m.node_logpot[0][0] = 1.0


def test_partition_hmm_counts():
    p = partition_edges(gen_hmm(20, 1.0, 0))
    assert (len(p.edges_A), len(p.edges_B), len(p.edges_AB)) == (9, 0, 10)


def test_partition_all_sum_and_single_cross():
    m = loopy_model(0, roles=[False] * 5)
    p = partition_edges(m)
    assert p.edges_B == [] and p.edges_AB == []
    assert partition_edges(weather_model()).edges_AB == [0]


@given(st.integers(0, 10 ** 6))
def test_partition_is_exhaustive(seed):
    m = loopy_model(seed)
    p = partition_edges(m)
    assert sorted(p.edges_A + p.edges_B + p.edges_AB) == list(range(m.num_edges))
    for e in p.edges_A:
        assert m.edge_classes[e] == EDGE_SUM
    for e in p.edges_B:
        assert m.edge_classes[e] == EDGE_MAX
    for e in p.edges_AB:
        assert m.edge_classes[e] == EDGE_CROSS


@given(st.integers(0, 10 ** 6))
def test_energy_invariant_under_edge_reorder_and_transpose(seed):
    m = loopy_model(seed, card=3)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m.num_edges)
    edges = [m.edges[k][::-1] for k in perm]
    tabs = [m.edge_logpot[k].T for k in perm]
    m2 = PairwiseModel(m.cards, m.node_logpot, edges, tabs, m.is_max)
    for _ in range(5):
        x = rng.integers(0, 3, size=m.num_vars)
        assert energy(m, x) == pytest.approx(energy(m2, x), abs=1e-12)


def test_ab_tree_examples():
    ok, order = is_ab_tree(weather_model())
    assert ok and order == [0, 1]
    assert not is_ab_tree(gen_hmm(20, 1.0, 0))[0]
    cyc = PairwiseModel([2] * 4, None, [(0, 1), (1, 2), (2, 3), (0, 3)], [np.zeros((2, 2))] * 4)
    assert not is_ab_tree(cyc)[0]
