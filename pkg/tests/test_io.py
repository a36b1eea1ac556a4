import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marginalmap import weather_model
from marginalmap.errors import ParseError, StructureError
from marginalmap.io import (apply_evidence, gen_grid, gen_hmm, gen_latent_tree, parse_evidence, parse_query,
                            parse_uai, parse_uai_document, write_evidence, write_query, write_uai)
from marginalmap.io.generators import MAX_LOOPY, SUM_LOOPY
from marginalmap.jgraph import FactorModel, from_pairwise, to_pairwise
from marginalmap.model import energy, partition_edges
from marginalmap.oracle import marginal_map_exact

WEATHER_DOC = """MARKOV
2
2 2
2
1 0
2 0 1

2
0.4 0.6

4
0.125 0.875 0.5 0.5
"""


def test_minimal_document():
    fm = parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n 0.4 0.6")
    assert fm.num_vars == 1 and list(fm.cards) == [2] and list(fm.scopes) == [(0,)]
    np.testing.assert_allclose(np.exp(fm.tables[0]), [0.4, 0.6])


def test_weather_document_energies():
    fm = parse_uai(WEATHER_DOC).with_roles([True, False])
    pm = to_pairwise(fm)
    for x in itertools.product(range(2), range(2)):
        assert fm.energy(x) == pytest.approx(energy(weather_model(), x), abs=1e-12)
        assert energy(pm, x) == pytest.approx(energy(weather_model(), x), abs=1e-12)


def test_bayes_and_zeros():
    doc = parse_uai_document("BAYES 1 3 1 1 0 3 0 0.5 0.5")
    assert doc.network == "BAYES"
    assert doc.model.tables[0][0] == -np.inf


def test_last_scope_variable_fastest():
    fm = parse_uai("MARKOV 2 2 3 1 2 0 1 6 1 2 3 4 5 6")
    np.testing.assert_allclose(np.exp(fm.tables[0]), [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize("cut, section", [(1, "variable count"), (3, "cardinality"), (4, "factor count"),
                                          (6, "scope"), (10, "table size"), (12, "table of factor 0")])
def test_truncated_names_section(cut, section):
    toks = WEATHER_DOC.split()[:cut]
    with pytest.raises(ParseError, match=section) as err:
        parse_uai(" ".join(toks))
    assert err.value.token_index == cut


@pytest.mark.parametrize("text, exc", [
    ("GRAPH 1 2 1 1 0 2 1 1", ParseError),
    ("MARKOV 1 x 1 1 0 2 1 1", ParseError),
    ("MARKOV 1 2 1 1 0 2 1 -1", ParseError),
    ("MARKOV 1 2 1 1 0 2 1 nan", ParseError),
    ("MARKOV 1 2 1 1 0 3 1 1 1", StructureError),
    ("MARKOV 1 2 1 1 4 2 1 1", StructureError),
    ("MARKOV 2 2 2 1 2 0 0 4 1 1 1 1", StructureError),
    ("MARKOV 1 2 1 1 0 2 1 1 7", ParseError),
])
def test_malformed(text, exc):
    with pytest.raises(exc):
        parse_uai(text)


def _same(a: FactorModel, b: FactorModel):
    assert list(a.cards) == list(b.cards) and a.scopes == b.scopes
    for s, t in zip(a.tables, b.tables):
        np.testing.assert_allclose(s, t, rtol=0, atol=1e-12)


def test_round_trip_weather():
    fm = from_pairwise(weather_model())
    _same(parse_uai(write_uai(fm)), fm)


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_round_trip_generated(seed):
    fm = from_pairwise(gen_hmm(8, seed=seed))
    text = write_uai(fm)
    _same(parse_uai(text), fm)


def test_query_examples():
    assert parse_query("2 0 3") == [0, 3]
    assert parse_query("0") == []
    assert parse_query(write_query([4, 1])) == [1, 4]
    with pytest.raises(StructureError):
        parse_query("1 5", num_vars=3)
    with pytest.raises(StructureError):
        parse_query("2 1 1")
    with pytest.raises(ParseError):
        parse_query("2 1")


def test_evidence_examples():
    assert parse_evidence("1 2 1") == [(2, 1)]
    assert parse_evidence(write_evidence([(0, 1), (3, 0)])) == [(0, 1), (3, 0)]
    with pytest.raises(StructureError):
        parse_evidence("1 2 3", cards=[2, 2, 2])
    with pytest.raises(StructureError):
        parse_evidence("1 5 0", cards=[2, 2, 2])


def _three_var(seed, roles):
    rng = np.random.default_rng(seed)
    scopes = [(0,), (0, 1), (1, 2), (0, 2)]
    tables = [rng.normal(size=(2,) * len(s)) for s in scopes]
    return FactorModel([2, 2, 2], scopes, tables, roles)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("roles", [[True, False, False], [True, False, True]])
def test_evidence_clamps(seed, roles):
    fm = _three_var(seed, roles)
    clamped = apply_evidence(fm, parse_evidence("1 2 1", fm.cards))
    _, phi = marginal_map_exact(to_pairwise(clamped))
    best = -np.inf
    B = [v for v in range(3) if roles[v]]
    A = [v for v in range(3) if not roles[v]]
    for xb in itertools.product(range(2), repeat=len(B)):
        vals = []
        for xa in itertools.product(range(2), repeat=len(A)):
            x = np.zeros(3, dtype=int)
            x[B], x[A] = xb, xa
            if x[2] == 1:
                vals.append(fm.energy(x))
        if vals:
            best = max(best, float(np.logaddexp.reduce(vals)))
    assert phi == pytest.approx(best, abs=1e-10)


def test_conflicting_evidence():
    fm = _three_var(0, None)
    with pytest.raises(StructureError):
        apply_evidence(fm, [(1, 0), (1, 1)])


def test_hmm_structure():
    m = gen_hmm(20, seed=0)
    assert m.num_vars == 20 and m.num_edges == 19 and len(m.max_nodes) == 10
    assert all(int(c) == 3 for c in m.cards)
    with pytest.raises(ValueError):
        gen_hmm(7)


def test_latent_tree_structure():
    m = gen_latent_tree(50, seed=3)
    assert m.num_edges == 49
    deg = np.zeros(50, dtype=int)
    for i, j in m.edges:
        deg[i] += 1
        deg[j] += 1
    assert set(np.flatnonzero(deg == 1)) == set(m.max_nodes)
    assert len(m.max_nodes) >= 2
    with pytest.raises(ValueError):
        gen_latent_tree(2)


def test_grid_structure():
    m = gen_grid(10, SUM_LOOPY, seed=0)
    assert m.num_vars == 100 and m.num_edges == 180 and len(m.max_nodes) == 50
    assert partition_edges(m).edges_B == []
    assert partition_edges(gen_grid(4, MAX_LOOPY)).edges_A == []
    with pytest.raises(ValueError):
        gen_grid(1)
    with pytest.raises(ValueError):
        gen_grid(4, "striped")


def test_generators_deterministic_and_sigma_zero():
    for gen in (lambda s, sig: gen_hmm(10, sig, s), lambda s, sig: gen_latent_tree(12, sig, s),
                lambda s, sig: gen_grid(4, SUM_LOOPY, sig, s)):
        a, b = gen(5, 1.0), gen(5, 1.0)
        assert a.edges == b.edges and list(a.max_nodes) == list(b.max_nodes)
        for s, t in zip(a.edge_logpot, b.edge_logpot):
            np.testing.assert_array_equal(s, t)
        assert all(np.all(t == 0) for t in gen(5, 0.0).edge_logpot)


def test_sigma_zero_hmm_independent_argmax():
    m = gen_hmm(6, 0.0, seed=2)
    x, _ = marginal_map_exact(m)
    assert list(x) == [int(np.argmax(m.node_logpot[v])) for v in m.max_nodes]
