import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marginalmap import PairwiseModel, weather_model
from marginalmap.jgraph import (FactorModel, JunctionGraph, build_junction_graph, check_running_intersection,
                                constrained_min_fill, factor_q, from_pairwise, jg_objective, run_mixed_jgbp,
                                run_sum_jgbp, to_pairwise)
from marginalmap.model import energy
from marginalmap.mp import run_mixed_product
from marginalmap.oracle import q_value

from conftest import tree_model

A, B, C, D, E, F = range(6)
HUB_SCOPES = [(B, D, E), (B, C, E), (A, B, C), (B, E, F)]


def hub_model(seed=0):
    rng = np.random.default_rng(seed)
    return FactorModel([2] * 6, HUB_SCOPES, [rng.normal(size=(2, 2, 2)) for _ in HUB_SCOPES],
                       [True, True, False, False, False, True])


def random_factor_model(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    cards = rng.integers(2, 4, size=n)
    scopes = []
    for _ in range(int(rng.integers(1, 6))):
        k = int(rng.integers(1, min(n, 3) + 1))
        scopes.append(tuple(int(v) for v in rng.choice(n, size=k, replace=False)))
    tables = [rng.normal(size=tuple(int(cards[v]) for v in s)) for s in scopes]
    return FactorModel(cards, scopes, tables, rng.random(n) < 0.5)


def joint(fm):
    out = np.zeros(tuple(int(c) for c in fm.cards))
    for s, t in zip(fm.scopes, fm.tables):
        shape = [1] * fm.num_vars
        for v, c in zip(s, t.shape):
            shape[v] = c
        perm = np.argsort(s)
        out = out + np.transpose(t, perm).reshape(shape) if s else out + t
    return out


def test_hub_clusters_and_partition():
    jg = build_junction_graph(hub_model())
    assert sorted(jg.clusters) == sorted([(A, B, C), (B, C, E), (B, D, E), (B, E, F)])
    pi = dict(zip(jg.clusters, jg.pi))
    assert pi[(A, B, C)] == (A, B) and pi[(B, E, F)] == (F,)
    assert pi[(B, D, E)] == () and pi[(B, C, E)] == ()
    assert check_running_intersection(jg)


def test_single_factor_and_chain():
    fm = FactorModel([2, 3], [(0, 1)], [np.zeros((2, 3))])
    jg = build_junction_graph(fm)
    assert jg.clusters == [(0, 1)] and jg.edges == [] and check_running_intersection(jg)
    chain = PairwiseModel([2] * 4, None, [(0, 1), (1, 2), (2, 3)], [np.zeros((2, 2))] * 3)
    jg = build_junction_graph(from_pairwise(chain))
    assert sorted(jg.clusters) == [(0, 1), (1, 2), (2, 3)]
    assert len(jg.edges) == 2 and sorted(jg.separators) == [(1,), (2,)]


def test_min_fill_puts_sum_first():
    fm = hub_model()
    order = constrained_min_fill(fm)
    kinds = [bool(fm.is_max[v]) for v in order]
    assert kinds == sorted(kinds)


@pytest.mark.parametrize("seed", range(50))
def test_running_intersection_random(seed):
    fm = random_factor_model(seed)
    jg = build_junction_graph(fm)
    assert check_running_intersection(jg)
    assert sorted(f for fs in jg.factors for f in fs) == list(range(len(fm.scopes)))
    for k, fs in enumerate(jg.factors):
        assert all(set(fm.scopes[f]) <= set(jg.clusters[k]) for f in fs)
    covered = [b for p in jg.pi for b in p]
    assert sorted(covered) == list(fm.max_nodes)
    assert all(set(p) <= set(c) for p, c in zip(jg.pi, jg.clusters))


@pytest.mark.parametrize("seed", range(10))
def test_factor_reassignment_preserves_energy(seed):
    fm = random_factor_model(seed)
    jg = build_junction_graph(fm)
    for x in itertools.product(*[range(int(c)) for c in fm.cards]):
        assert jg.energy(x) == pytest.approx(fm.energy(x), abs=1e-10)


def test_violating_graph_detected():
    fm = FactorModel([2] * 3, [(0, 1), (1, 2)], [np.zeros((2, 2))] * 2)
    good = JunctionGraph(fm, [(0, 1), (1, 2)], [[0], [1]], [(0, 1)], [(1,)], [(), ()])
    assert check_running_intersection(good)
    bad = JunctionGraph(fm, [(0, 1), (1, 2)], [[0], [1]], [], [], [(), ()])
    assert not check_running_intersection(bad)
    single = JunctionGraph(fm, [(0, 1, 2)], [[0, 1]], [], [], [()])
    assert check_running_intersection(single)


def test_weather_decodes_sunny():
    rep = run_mixed_jgbp(build_junction_graph(from_pairwise(weather_model())))
    assert list(rep.decode) == [1] and rep.q_value == pytest.approx(np.log(0.6))
    assert rep.info["pi_policy"] == "max-cluster-with-most-max-vars"


@pytest.mark.parametrize("seed", range(5))
def test_sum_junction_tree_exact(seed):
    m = tree_model(seed, n=6, card=3, roles=[False] * 6)
    fm = from_pairwise(m)
    jg = build_junction_graph(fm)
    beliefs, conv = run_sum_jgbp(jg)
    assert conv
    p = np.exp(joint(fm) - joint(fm).max())
    p /= p.sum()
    for c, b in zip(jg.clusters, beliefs):
        axes = tuple(v for v in range(fm.num_vars) if v not in c)
        np.testing.assert_allclose(b, p.sum(axis=axes), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_hub_decode_locally_optimal(seed):
    fm = hub_model(seed)
    rep = run_mixed_jgbp(build_junction_graph(fm))
    x = np.asarray(rep.decode)
    q = factor_q(fm, x)
    assert q == pytest.approx(rep.q_value)
    for k in range(len(x)):
        y = x.copy()
        y[k] = 1 - y[k]
        assert factor_q(fm, y) <= q + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_objective_at_point_mass_equals_q(seed):
    m = tree_model(seed, n=6, card=2)
    fm = from_pairwise(m)
    jg = build_junction_graph(fm)
    assert len(jg.edges) == len(jg.clusters) - 1
    rng = np.random.default_rng(seed)
    xB = rng.integers(0, 2, size=len(fm.max_nodes))
    lj = joint(fm)
    idx = [slice(None)] * fm.num_vars
    for v, s in zip(fm.max_nodes, xB):
        idx[v] = s
    clamp = np.full(lj.shape, -np.inf)
    clamp[tuple(idx)] = lj[tuple(idx)]
    p = np.exp(clamp - clamp.max())
    p /= p.sum()
    beliefs = [p.sum(axis=tuple(v for v in range(fm.num_vars) if v not in c)) for c in jg.clusters]
    assert jg_objective(jg, beliefs) == pytest.approx(q_value(m, xB), abs=1e-9)


def test_agrees_with_pairwise_mixed_product():
    agree = 0
    for seed in range(100):
        m = tree_model(seed, n=6, card=2)
        if len(m.max_nodes) == 0:
            agree += 1
            continue
        a = run_mixed_product(m).decode
        b = run_mixed_jgbp(build_junction_graph(from_pairwise(m))).decode
        agree += list(a) == list(b)
    assert agree >= 95


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_pairwise_round_trip(seed):
    m = tree_model(seed % 1000, n=5, card=3)
    back = to_pairwise(from_pairwise(m))
    rng = np.random.default_rng(seed)
    for _ in range(5):
        x = rng.integers(0, 3, size=5)
        assert energy(back, x) == pytest.approx(energy(m, x), abs=1e-10)
    assert list(back.max_nodes) == list(m.max_nodes)


def test_to_pairwise_rejects_large_scopes():
    with pytest.raises(ValueError):
        to_pairwise(hub_model())
