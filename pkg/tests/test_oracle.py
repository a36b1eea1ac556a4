import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marginalmap import PairwiseModel, ResourceLimitError, weather_model
from marginalmap.model import energy
from marginalmap.oracle import (conditional_entropy_exact, joint_distribution, log_partition_exact, map_exact,
                                marginal_map_exact, marginals_exact, model_conditional_entropy, q_structure,
                                q_value, q_values, smoothed_phi)
from marginalmap.io import gen_hmm

from conftest import loopy_model, tree_model


def brute_q(model, x_B):
    B = list(model.max_nodes)
    A = list(model.sum_nodes)
    vals = []
    for xa in itertools.product(*[range(model.cards[a]) for a in A]):
        x = np.zeros(model.num_vars, dtype=int)
        x[B] = x_B
        x[A] = xa
        vals.append(energy(model, x))
    return float(np.logaddexp.reduce(vals))


def test_weather_q_values():
    m = weather_model()
    assert q_value(m, [1]) == pytest.approx(np.log(0.6), abs=1e-12)
    assert q_value(m, [0]) == pytest.approx(np.log(0.4), abs=1e-12)


def test_two_var_q():
    m = PairwiseModel([2, 2], None, [(0, 1)], [np.log([[3, 1], [1, 2]])], roles=["sum", "max"])
    assert q_value(m, [0]) == pytest.approx(np.log(4))
    assert q_value(m, [1]) == pytest.approx(np.log(3))


def test_weather_exact():
    m = weather_model()
    x, v = marginal_map_exact(m)
    assert list(x) == [1] and v == pytest.approx(np.log(0.6))
    assert log_partition_exact(m) == pytest.approx(0.0, abs=1e-12)
    x, v = map_exact(m)
    assert list(x) == [0, 1] and v == pytest.approx(np.log(0.35))


def test_empty_max_and_empty_sum():
    m = loopy_model(3, roles=[False] * 5)
    x, v = marginal_map_exact(m)
    assert len(x) == 0 and v == pytest.approx(log_partition_exact(m))
    m = loopy_model(3, roles=[True] * 5)
    x, v = marginal_map_exact(m)
    xm, vm = map_exact(m)
    assert list(x) == list(xm) and v == pytest.approx(vm)


def test_single_var_partition():
    assert log_partition_exact(PairwiseModel([2])) == pytest.approx(np.log(2))


def test_smoothed_phi_examples():
    m = weather_model()
    vals = [smoothed_phi(m, e) for e in (1e-1, 1e-2, 1e-3)]
    assert vals[0] >= vals[1] >= vals[2] >= np.log(0.6) - 1e-12
    assert abs(vals[2] - np.log(0.6)) < 1e-3
    tied = PairwiseModel([2, 2], None, [(0, 1)], [np.log([[2, 1], [1, 2]])], roles=["sum", "max"])
    for e in (1.0, 0.5, 0.01):
        assert smoothed_phi(tied, e) == pytest.approx(np.log(3) + e * np.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        smoothed_phi(m, 0.0)


@given(st.integers(0, 10 ** 6))
def test_smoothing_is_monotone_and_matches_partition(seed):
    m = loopy_model(seed)
    assert smoothed_phi(m, 1.0) == pytest.approx(log_partition_exact(m), abs=1e-10)
    assert smoothed_phi(m, 0.1) <= smoothed_phi(m, 0.5) + 1e-12
    assert marginal_map_exact(m)[1] <= smoothed_phi(m, 0.1) + 1e-12


@given(st.integers(0, 10 ** 6))
def test_forest_q_matches_enumeration(seed):
    m = tree_model(seed, n=7, card=3)
    assert q_structure(m).forest
    rng = np.random.default_rng(seed)
    XB = np.array([[rng.integers(3) for _ in m.max_nodes] for _ in range(4)], dtype=np.int64)
    got = q_values(m, XB)
    for row, g in zip(XB, got):
        assert g == pytest.approx(brute_q(m, row), abs=1e-10)


@given(st.integers(0, 10 ** 6))
def test_loopy_q_matches_enumeration(seed):
    m = loopy_model(seed, n=6, p=0.8)
    x = np.zeros(len(m.max_nodes), dtype=np.int64)
    assert q_value(m, x) == pytest.approx(brute_q(m, x), abs=1e-10)


@given(st.integers(0, 10 ** 6))
def test_ordering_and_marginals(seed):
    m = loopy_model(seed)
    node, edge = marginals_exact(m)
    for t in node:
        assert t.sum() == pytest.approx(1.0, abs=1e-12) and t.min() >= 0
    for (i, j), t in zip(m.edges, edge):
        np.testing.assert_allclose(t.sum(axis=1), node[i], atol=1e-12)
        np.testing.assert_allclose(t.sum(axis=0), node[j], atol=1e-12)
    if 0 < len(m.max_nodes) < m.num_vars:
        assert map_exact(m)[1] <= marginal_map_exact(m)[1] + 1e-12
        assert marginal_map_exact(m)[1] <= log_partition_exact(m) + 1e-12


def test_mmap_ties_go_lexicographically_first():
    m = PairwiseModel([2, 2], roles=["max", "max"])
    assert list(marginal_map_exact(m)[0]) == [0, 0]


def test_caps_raise():
    m = gen_hmm(20, 1.0, 0)
    with pytest.raises(ResourceLimitError):
        log_partition_exact(m, cap=100)
    with pytest.raises(ResourceLimitError):
        marginal_map_exact(m, cap=100)
    loopy = loopy_model(0, n=6, p=1.0, roles=[False] * 5 + [True])
    with pytest.raises(ResourceLimitError):
        q_value(loopy, [0], cap=4)


def test_conditional_entropy_examples():
    assert conditional_entropy_exact(np.full((2, 2), 0.25), [0]) == pytest.approx(np.log(2))
    pm = np.zeros((2, 2))
    pm[1, 0] = 1.0
    assert conditional_entropy_exact(pm, [1]) == pytest.approx(0.0)
    p = joint_distribution(weather_model())
    h = -np.sum(p * np.log(p))
    hb = -(0.4 * np.log(0.4) + 0.6 * np.log(0.6))
    assert model_conditional_entropy(weather_model()) == pytest.approx(h - hb, abs=1e-10)


@given(st.integers(0, 10 ** 6))
def test_duality_at_clamped_optimum(seed):
    # <theta, tau> + H_{A|B} at tau = 1(x_B) p(x_A | x_B) equals Q(x_B)
    m = loopy_model(seed)
    if len(m.max_nodes) == 0:
        return
    x_star, phi = marginal_map_exact(m)
    B = list(m.max_nodes)
    for xb in itertools.product(*[range(m.cards[b]) for b in B]):
        lp = np.full(tuple(m.cards), -np.inf)
        for x in itertools.product(*[range(c) for c in m.cards]):
            if all(x[b] == s for b, s in zip(B, xb)):
                lp[x] = energy(m, x)
        q = np.logaddexp.reduce(lp.ravel())
        tau = np.exp(lp - q)
        th = np.where(tau > 0, lp, 0.0)
        obj = float(np.sum(tau * th)) + conditional_entropy_exact(tau, B)
        assert obj <= phi + 1e-8
        if list(xb) == list(x_star):
            assert obj == pytest.approx(phi, abs=1e-8)
