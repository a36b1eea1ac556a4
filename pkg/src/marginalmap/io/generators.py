"""Benchmark model families: hidden chains, latent trees and chessboard grids."""
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from ..model import PairwiseModel

NODE_STD = 0.1  # node log-potentials have variance 0.01

SUM_LOOPY = "sum-loopy"
MAX_LOOPY = "max-loopy"


def _draw(rng, cards, edges, sigma):
    node = [rng.normal(0.0, NODE_STD, size=int(c)) for c in cards]
    tabs = [rng.normal(0.0, sigma, size=(int(cards[i]), int(cards[j]))) if sigma > 0
            else np.zeros((int(cards[i]), int(cards[j]))) for i, j in edges]
    return node, tabs


def gen_hmm(n: int = 20, sigma: float = 1.0, seed=0, card: int = 3) -> PairwiseModel:
    """Hidden chain: even indices form the sum chain, each odd index hangs off its predecessor as a max node."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even number")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    edges = []
    for k in range(0, n, 2):
        if k + 2 < n:
            edges.append((k, k + 2))
        edges.append((k, k + 1))
    edges.sort()
    cards = np.full(n, card)
    node, tabs = _draw(rng, cards, edges, sigma)
    roles = ["max" if v % 2 else "sum" for v in range(n)]
    return PairwiseModel(cards, node, edges, tabs, roles)


def random_tree_edges(n: int, rng):
    """Minimum spanning tree of a random symmetric Uniform(0, 1) matrix."""
    w = rng.random((n, n))
    w = np.triu(w, 1)
    w = w + w.T
    mst = minimum_spanning_tree(np.triu(w, 1)).tocoo()
    return sorted((int(min(i, j)), int(max(i, j))) for i, j in zip(mst.row, mst.col))


def gen_latent_tree(n: int = 50, sigma: float = 1.0, seed=0, card: int = 3,
                    max_leaves: Optional[int] = None) -> PairwiseModel:
    """Random tree with the leaves as max nodes and internal nodes as sum nodes.

    ``max_leaves`` keeps only the lowest-indexed leaves as max nodes, which
    bounds the size of the max-part configuration space for exact checks.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(n, rng)
    deg = np.zeros(n, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    leaves = [v for v in range(n) if deg[v] == 1]
    if max_leaves is not None:
        if max_leaves < 1:
            raise ValueError("max_leaves must be positive")
        leaves = leaves[:max_leaves]
    is_max = np.zeros(n, dtype=bool)
    is_max[leaves] = True
    cards = np.full(n, card)
    node, tabs = _draw(rng, cards, edges, sigma)
    return PairwiseModel(cards, node, edges, tabs, is_max)


def grid_edges(side: int):
    edges = []
    for r in range(side):
        for c in range(side):
            v = r * side + c
            if c + 1 < side:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + side))
    return sorted(edges)


def gen_grid(side: int = 10, pattern: str = SUM_LOOPY, sigma: float = 1.0, seed=0, card: int = 3) -> PairwiseModel:
    """4-neighbor lattice with a chessboard role pattern; ``(r + c)`` even is sum in ``sum-loopy``."""
    if side < 2:
        raise ValueError("side must be at least 2")
    pattern = pattern.lower().replace("_", "-")
    if pattern not in (SUM_LOOPY, MAX_LOOPY):
        raise ValueError(f"unknown grid pattern {pattern!r}")
    rng = np.random.default_rng(seed)
    edges = grid_edges(side)
    n = side * side
    even = np.array([(v // side + v % side) % 2 == 0 for v in range(n)])
    is_max = ~even if pattern == SUM_LOOPY else even
    cards = np.full(n, card)
    node, tabs = _draw(rng, cards, edges, sigma)
    return PairwiseModel(cards, node, edges, tabs, is_max)
