"""Pairwise discrete models with a sum/max partition of the variables."""
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfigurationError

NEG_INF = -np.inf

#: edge classes used throughout the kernels
EDGE_SUM, EDGE_MAX, EDGE_CROSS = 0, 1, 2


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _parse_roles(roles, n):
    if roles is None:
        return np.zeros(n, dtype=bool)
    out = []
    for r in roles:
        if isinstance(r, str):
            r = r.strip().lower()
            if r not in ("sum", "max"):
                raise ValueError(f"unknown role {r!r}")
            out.append(r == "max")
        else:
            out.append(bool(r))
    if len(out) != n:
        raise ValueError("roles length does not match number of variables")
    return np.array(out, dtype=bool)


@dataclass(frozen=True)
class GraphPartition:
    """Edge indices split by the roles of their endpoints."""

    edges_A: List[int]
    edges_B: List[int]
    edges_AB: List[int]


@dataclass(frozen=True, eq=False)
class PairwiseModel:
    """Discrete pairwise model in log-potential form.

    ``edge_logpot[e]`` has shape ``(cards[i], cards[j])`` for ``edges[e] == (i, j)``.
    Zero potentials are stored as ``-inf``.
    """

    cards: np.ndarray
    is_max: np.ndarray
    node_logpot: Tuple[np.ndarray, ...]
    edges: Tuple[Tuple[int, int], ...]
    edge_logpot: Tuple[np.ndarray, ...]

    def __init__(self, cards, node_logpot=None, edges=(), edge_logpot=(), roles=None):
        cards = np.array(cards, dtype=np.int64)
        if cards.ndim != 1 or np.any(cards < 1):
            raise ValueError("cardinalities must be positive integers")
        n = len(cards)
        if node_logpot is None:
            node_logpot = [np.zeros(c) for c in cards]
        node_logpot = tuple(_freeze(t) for t in node_logpot)
        if len(node_logpot) != n:
            raise ValueError("need one node table per variable")
        for i, t in enumerate(node_logpot):
            if t.shape != (cards[i],):
                raise ValueError(f"node table {i} has shape {t.shape}, expected ({cards[i]},)")
        edges = tuple((int(i), int(j)) for i, j in edges)
        edge_logpot = tuple(_freeze(t) for t in edge_logpot)
        if len(edges) != len(edge_logpot):
            raise ValueError("need one table per edge")
        seen = set()
        for e, (i, j) in enumerate(edges):
            if i == j:
                raise ValueError(f"self-loop on variable {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {(i, j)} refers to a missing variable")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            if edge_logpot[e].shape != (cards[i], cards[j]):
                raise ValueError(f"edge table {e} has shape {edge_logpot[e].shape}")
        for t in node_logpot + edge_logpot:
            if np.any(np.isnan(t)) or np.any(t == np.inf):
                raise ValueError("log-potentials must be finite or -inf")
        is_max = _parse_roles(roles, n)
        is_max.setflags(write=False)
        cards.setflags(write=False)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "is_max", is_max)
        object.__setattr__(self, "node_logpot", node_logpot)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_logpot", edge_logpot)

    @property
    def num_vars(self) -> int:
        return len(self.cards)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def max_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.is_max)

    @property
    def sum_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.is_max)

    def with_roles(self, roles) -> "PairwiseModel":
        return PairwiseModel(self.cards, self.node_logpot, self.edges, self.edge_logpot, roles)

    def with_node_logpot(self, node_logpot) -> "PairwiseModel":
        return PairwiseModel(self.cards, node_logpot, self.edges, self.edge_logpot, self.is_max)

    def with_edge_logpot(self, edge_logpot) -> "PairwiseModel":
        return PairwiseModel(self.cards, self.node_logpot, self.edges, edge_logpot, self.is_max)

    def edge_table(self, i: int, j: int) -> np.ndarray:
        """Table indexed ``[x_i, x_j]`` for the edge joining ``i`` and ``j``."""
        e = self.edge_index[(min(i, j), max(i, j))]
        t = self.edge_logpot[e]
        return t if self.edges[e][0] == i else t.T

    @cached_property
    def edge_index(self):
        return {(min(i, j), max(i, j)): e for e, (i, j) in enumerate(self.edges)}

    @cached_property
    def neighbors(self) -> List[List[int]]:
        nb = [[] for _ in range(self.num_vars)]
        for i, j in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return [sorted(x) for x in nb]

    @cached_property
    def edge_classes(self) -> np.ndarray:
        cls = np.empty(self.num_edges, dtype=np.int64)
        for e, (i, j) in enumerate(self.edges):
            mi, mj = self.is_max[i], self.is_max[j]
            cls[e] = EDGE_MAX if (mi and mj) else (EDGE_SUM if not (mi or mj) else EDGE_CROSS)
        return cls

    @cached_property
    def packed(self) -> "PackedModel":
        return PackedModel.from_model(self)


@dataclass(frozen=True, eq=False)
class PackedModel:
    """Padded array layout consumed by the message-passing kernels.

    Directed edge ``2e`` runs ``edges[e][0] -> edges[e][1]`` and ``2e + 1`` the
    reverse. Padded states carry ``-inf`` potentials.
    """

    n: int
    K: int
    cards: np.ndarray
    is_max: np.ndarray
    theta_node: np.ndarray  # (n, K)
    theta_dir: np.ndarray  # (2E, K, K) indexed [x_src, x_dst]
    src: np.ndarray
    dst: np.ndarray
    rev: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    order: np.ndarray
    edge_of: np.ndarray = field(repr=False)

    @classmethod
    def from_model(cls, m: PairwiseModel) -> "PackedModel":
        n, E = m.num_vars, m.num_edges
        K = int(m.cards.max()) if n else 1
        theta_node = np.full((n, K), NEG_INF)
        for i, t in enumerate(m.node_logpot):
            theta_node[i, : len(t)] = t
        theta_dir = np.full((2 * E, K, K), NEG_INF)
        src = np.empty(2 * E, dtype=np.int64)
        dst = np.empty(2 * E, dtype=np.int64)
        for e, (i, j) in enumerate(m.edges):
            t = m.edge_logpot[e]
            theta_dir[2 * e, : t.shape[0], : t.shape[1]] = t
            theta_dir[2 * e + 1, : t.shape[1], : t.shape[0]] = t.T
            src[2 * e], dst[2 * e] = i, j
            src[2 * e + 1], dst[2 * e + 1] = j, i
        rev = np.arange(2 * E, dtype=np.int64) ^ 1
        incoming = [[] for _ in range(n)]
        for d in range(2 * E):
            incoming[dst[d]].append(d)
        in_ptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            in_ptr[i + 1] = in_ptr[i] + len(incoming[i])
        in_idx = np.array([d for lst in incoming for d in lst], dtype=np.int64)
        order = np.array(sorted(range(2 * E), key=lambda d: (src[d], dst[d])), dtype=np.int64)
        edge_of = np.arange(2 * E, dtype=np.int64) // 2
        return cls(n, K, m.cards.astype(np.int64), m.is_max.copy(), theta_node, theta_dir,
                   src, dst, rev, in_ptr, in_idx, order, edge_of)


def energy(model: PairwiseModel, x: Sequence[int]) -> float:
    """Joint log-potential ``sum_i theta_i(x_i) + sum_ij theta_ij(x_i, x_j)``."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (model.num_vars,):
        raise InvalidConfigurationError(f"configuration must have {model.num_vars} entries")
    if np.any(x < 0) or np.any(x >= model.cards):
        raise InvalidConfigurationError(f"state index out of range in {x.tolist()}")
    total = 0.0
    for i, t in enumerate(model.node_logpot):
        total += t[x[i]]
    for (i, j), t in zip(model.edges, model.edge_logpot):
        total += t[x[i], x[j]]
    return float(total)


def partition_edges(model: PairwiseModel) -> GraphPartition:
    cls = model.edge_classes
    return GraphPartition(
        edges_A=[int(e) for e in np.flatnonzero(cls == EDGE_SUM)],
        edges_B=[int(e) for e in np.flatnonzero(cls == EDGE_MAX)],
        edges_AB=[int(e) for e in np.flatnonzero(cls == EDGE_CROSS)],
    )


def connected_components(n: int, edges) -> List[List[int]]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    comps = {}
    for v in range(n):
        comps.setdefault(find(v), []).append(v)
    return list(comps.values())


def is_forest(n: int, edges) -> bool:
    return len(list(edges)) == n - len(connected_components(n, edges))


def is_ab_tree(model: PairwiseModel) -> Tuple[bool, Optional[List[int]]]:
    """Test whether the graph admits an order with every max node before every sum node.

    Returns ``(True, order)`` with roots first, or ``(False, None)``.
    """
    n = model.num_vars
    if not is_forest(n, model.edges):
        return False, None
    nb = model.neighbors
    order_max, order_sum = [], []
    for comp in connected_components(n, model.edges):
        maxes = [v for v in comp if model.is_max[v]]
        root = min(maxes) if maxes else min(comp)
        seen = {root}
        queue = deque([root])
        while queue:
            v = queue.popleft()
            (order_max if model.is_max[v] else order_sum).append(v)
            for u in nb[v]:
                if u in seen:
                    continue
                if model.is_max[u] and not model.is_max[v]:
                    return False, None
                seen.add(u)
                queue.append(u)
    return True, order_max + order_sum


def weather_model() -> PairwiseModel:
    """Two-variable weather/commute example.

    Variable 0 is the weather (max node; 0=rainy, 1=sunny), variable 1 the
    commute (sum node; 0=walk, 1=drive).
    """
    p_b = np.array([0.4, 0.6])
    p_a_given_b = np.array([[1 / 8, 7 / 8], [1 / 2, 1 / 2]])
    return PairwiseModel(
        cards=[2, 2],
        node_logpot=[np.log(p_b), np.zeros(2)],
        edges=[(0, 1)],
        edge_logpot=[np.log(p_a_given_b)],
        roles=["max", "sum"],
    )


def random_model(rng, n, edges, card=2, sigma=1.0, node_sigma=0.1, roles=None) -> PairwiseModel:
    """Gaussian log-potentials on a given edge list; handy for property tests."""
    cards = np.broadcast_to(np.asarray(card), (n,)).astype(np.int64)
    node = [rng.normal(0.0, node_sigma, size=c) for c in cards]
    tabs = [rng.normal(0.0, sigma, size=(cards[i], cards[j])) for i, j in edges]
    return PairwiseModel(cards, node, edges, tabs, roles)
