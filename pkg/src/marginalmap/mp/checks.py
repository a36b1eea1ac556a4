"""Fixed-point diagnostics: reparameterization, mixed consistency, local optimality."""
import itertools
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..beliefs import BeliefSet
from ..errors import ResourceLimitError, StructuralViolationError
from ..model import PairwiseModel, energy
from ..oracle import DEFAULT_CAP, q_values
from .engine import TIE_TOL

EXHAUSTIVE_PROBES = 2 ** 16
RANDOM_PROBES = 1000


def _probe_set(model: PairwiseModel, seed: int):
    total = int(np.prod(model.cards.astype(object))) if model.num_vars else 1
    if total <= EXHAUSTIVE_PROBES:
        return [np.array(x, dtype=np.int64) for x in itertools.product(*[range(c) for c in model.cards])]
    rng = np.random.default_rng(seed)
    return [np.array([rng.integers(c) for c in model.cards], dtype=np.int64) for _ in range(RANDOM_PROBES)]


def reparam_logp(model: PairwiseModel, b: BeliefSet, rho, x) -> float:
    """``sum_i log b_i + sum_ij rho_ij [log b_ij - log b_i - log b_j]`` at ``x``."""
    with np.errstate(divide="ignore"):
        s = sum(float(np.log(b.node[i][x[i]])) for i in range(model.num_vars))
        for e, (i, j) in enumerate(model.edges):
            bij = b.edge[e][x[i], x[j]]
            s += rho[e] * (np.log(bij) - np.log(b.node[i][x[i]]) - np.log(b.node[j][x[j]]))
    return float(s)


def check_reparameterization(model: PairwiseModel, rho, b: BeliefSet, seed: int = 0) -> float:
    """Max deviation of ``log p_hat(x) - log p(x)`` from a constant over the probe set."""
    rho = np.ones(model.num_edges) if rho is None else np.asarray(rho, dtype=float)
    c = None
    worst = 0.0
    for x in _probe_set(model, seed):
        lp = energy(model, x)
        if not np.isfinite(lp):
            continue
        if any(b.node[i][x[i]] <= 0 for i in range(model.num_vars)) or any(
                b.edge[e][x[i], x[j]] <= 0 for e, (i, j) in enumerate(model.edges)):
            raise StructuralViolationError(f"belief vanishes at configuration {x.tolist()} of positive probability")
        d = reparam_logp(model, b, rho, x) - lp
        if c is None:
            c = d
        worst = max(worst, abs(d - c))
    return worst


def _norm(v):
    s = v.sum()
    return v / s if s > 0 else v


def argmax_set(p, tie_tol: float = TIE_TOL) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lp = np.log(p)
    return lp >= lp.max() - tie_tol


def check_mixed_consistency(model: PairwiseModel, b: BeliefSet, tie_tol: float = TIE_TOL) -> Dict[str, Optional[float]]:
    """Residuals of the sum (a), max (b) and argmax-restricted sum (c) marginalization identities.

    Each side is normalized to sum one before comparing, since the identities
    hold up to proportionality. Classes with no applicable edge report ``None``.
    """
    res = {"a": None, "b": None, "c": None}

    def upd(key, val):
        res[key] = val if res[key] is None else max(res[key], val)

    for e, (u, v) in enumerate(model.edges):
        for i, j, t in ((u, v, b.edge[e]), (v, u, b.edge[e].T)):  # t indexed [x_i, x_j]
            if not model.is_max[i]:
                upd("a", float(np.abs(_norm(t.sum(axis=0)) - _norm(b.node[j])).max()))
            elif model.is_max[j]:
                upd("b", float(np.abs(_norm(t.max(axis=0)) - _norm(b.node[j])).max()))
            else:
                star = argmax_set(b.node[i], tie_tol)
                upd("c", float(np.abs(_norm(t[star].sum(axis=0)) - _norm(b.node[j])).max()))
    return res


def verify_local_optimality(model: PairwiseModel, x_B, subsets: Sequence[Sequence[int]],
                            cap: int = DEFAULT_CAP, tol: float = 1e-9) -> List[bool]:
    """For each set ``C`` of max nodes: can no change restricted to ``C`` improve ``Q``?"""
    x_B = np.asarray(x_B, dtype=np.int64)
    B = [int(v) for v in model.max_nodes]
    slot = {v: k for k, v in enumerate(B)}
    q0 = float(q_values(model, x_B[None, :], cap)[0])
    out = []
    for C in subsets:
        C = [int(c) for c in C]
        if any(c not in slot for c in C):
            raise ValueError("subsets must contain max nodes only")
        size = int(np.prod([int(model.cards[c]) for c in C], dtype=object)) if C else 1
        if size > cap:
            raise ResourceLimitError(f"subset has {size} configurations, above the cap of {cap}", size, cap)
        grid = np.array(list(itertools.product(*[range(int(model.cards[c])) for c in C])), dtype=np.int64)
        XB = np.repeat(x_B[None, :], len(grid), axis=0)
        for k, c in enumerate(C):
            XB[:, slot[c]] = grid[:, k] if len(grid[0]) else XB[:, slot[c]]
        out.append(bool(q_values(model, XB, cap).max() <= q0 + tol))
    return out


def hamming_subsets(model: PairwiseModel) -> List[List[int]]:
    return [[int(v)] for v in model.max_nodes]
