"""Comparison baselines: EM coordinate ascent and taboo local search."""
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .beliefs import MessageSet, beliefs_from_messages
from . import kernels
from .errors import ResourceLimitError
from .kernels import MODE_MAX
from .model import EDGE_CROSS, EDGE_MAX, EDGE_SUM, PairwiseModel, is_forest
from .mp.engine import (SolveReport, SolverOptions, clamp_max_nodes, iterate, mixed_tables, safe_q,
                        sum_product_tables)
from .oracle import DEFAULT_CAP, map_exact, marginals_exact, q_structure, q_values

EXACT = "exact"
BP = "bp"


@dataclass
class EmOptions:
    max_rounds: int = 100
    e_step: str = EXACT
    m_step: str = EXACT
    num_random_inits: int = 5
    use_sum_product_init: bool = True
    seed: int = 0
    cap: int = DEFAULT_CAP
    m_cap: int = 2 ** 20
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.e_step not in (EXACT, BP) or self.m_step not in (EXACT, BP):
            raise ValueError("e_step and m_step must be 'exact' or 'bp'")


@dataclass
class TabooOptions:
    max_steps: int = 500
    num_random_inits: int = 5
    use_sequential_init: bool = True
    seed: int = 0
    cap: int = DEFAULT_CAP
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def _bp_opts():
    return SolverOptions(num_random_inits=0, use_sum_product_init=False)


def sum_product_marginals(model: PairwiseModel):
    """Singleton beliefs of plain sum-product BP from uniform messages."""
    modes, w_src, w_edge = sum_product_tables(model)
    msgs = MessageSet.uniform(model)
    iterate(model, msgs, modes, w_src, w_edge, _bp_opts())
    return beliefs_from_messages(model, msgs, np.ones(model.num_vars), np.ones(model.num_edges)).node


def random_configs(model: PairwiseModel, rng, count: int) -> List[np.ndarray]:
    cards = model.cards[model.max_nodes]
    return [np.array([rng.integers(c) for c in cards], dtype=np.int64) for _ in range(count)]


# ---------------------------------------------------------------------------
# EM
# ---------------------------------------------------------------------------

def e_step(model: PairwiseModel, x_B, mode: str = EXACT, cap: int = DEFAULT_CAP):
    """Node marginals of ``p(x_A | x_B)`` for every variable (point masses on the max nodes)."""
    cm = clamp_max_nodes(model, x_B)
    a_edges = [model.edges[e] for e in range(model.num_edges) if model.edge_classes[e] == EDGE_SUM]
    if mode == BP or is_forest(model.num_vars, a_edges):
        # messages out of clamped nodes ignore their inputs, so this is exact on a sum forest
        return sum_product_marginals(cm)
    A = [int(a) for a in model.sum_nodes]
    slot = {a: k for k, a in enumerate(A)}
    node = []
    for a in A:
        t = np.array(model.node_logpot[a])
        for v, s in zip(model.max_nodes, x_B):
            if (min(a, v), max(a, v)) in model.edge_index:
                t = t + model.edge_table(a, int(v))[:, s]
        node.append(t)
    sub = PairwiseModel(model.cards[A], node, [(slot[i], slot[j]) for i, j in a_edges],
                        [model.edge_logpot[e] for e in range(model.num_edges) if model.edge_classes[e] == EDGE_SUM])
    sub_node, _ = marginals_exact(sub, cap)
    out = []
    for v in range(model.num_vars):
        if model.is_max[v]:
            t = np.zeros(model.cards[v])
            t[x_B[list(model.max_nodes).index(v)]] = 1.0
            out.append(t)
        else:
            out.append(sub_node[slot[v]])
    return out


def expected_max_model(model: PairwiseModel, tau) -> PairwiseModel:
    """Max-node model with ``theta_i + sum_j E_tau_j[theta_ij]`` and the max-max couplings."""
    B = [int(b) for b in model.max_nodes]
    slot = {b: k for k, b in enumerate(B)}
    node = [np.array(model.node_logpot[b], dtype=float) for b in B]
    edges, tabs = [], []
    for e, (i, j) in enumerate(model.edges):
        cls = model.edge_classes[e]
        if cls == EDGE_MAX:
            edges.append((slot[i], slot[j]))
            tabs.append(model.edge_logpot[e])
        elif cls == EDGE_CROSS:
            b, a = (i, j) if model.is_max[i] else (j, i)
            t = model.edge_table(b, a)
            w = tau[a]
            with np.errstate(invalid="ignore"):
                contrib = np.where(w[None, :] > 0, t * w[None, :], 0.0).sum(axis=1)
            node[slot[b]] = node[slot[b]] + contrib
    return PairwiseModel(model.cards[B], node, edges, tabs, np.ones(len(B), dtype=bool))


def m_step(bm: PairwiseModel, mode: str = EXACT, cap: int = 2 ** 20) -> np.ndarray:
    """Maximize the expected max-node model; ties go to the lowest index."""
    if bm.num_edges == 0:
        return np.array([int(np.argmax(t)) for t in bm.node_logpot], dtype=np.int64)
    if mode == EXACT:
        try:
            return map_exact(bm, cap)[0]
        except ResourceLimitError:
            pass
    E2 = 2 * bm.num_edges
    msgs = MessageSet.uniform(bm)
    iterate(bm, msgs, np.full(E2, MODE_MAX, dtype=np.int64), np.ones(E2), np.ones(E2), _bp_opts())
    from .beliefs import mixed_beliefs
    return mixed_beliefs(bm, msgs, np.ones(bm.num_edges)).decode(range(bm.num_vars))


def _em_from(model, x, opts):
    seen = set()
    traj = []
    for _ in range(opts.max_rounds):
        key = tuple(int(v) for v in x)
        if key in seen:
            break
        seen.add(key)
        traj.append(x.copy())
        tau = e_step(model, x, opts.e_step, opts.cap)
        x = m_step(expected_max_model(model, tau), opts.m_step, opts.m_cap)
    else:
        traj.append(x.copy())
    return traj


def run_em(model: PairwiseModel, opts: Optional[EmOptions] = None) -> SolveReport:
    """EM over the max nodes with the sum nodes as hidden variables; best of several inits."""
    opts = opts or EmOptions()
    t0 = time.perf_counter()
    rng = np.random.default_rng(opts.seed)
    inits, labels = [], []
    if opts.init is not None:
        inits.append(np.asarray(opts.init, dtype=np.int64))
        labels.append("given")
    else:
        if opts.use_sum_product_init:
            marg = sum_product_marginals(model)
            inits.append(np.array([int(np.argmax(marg[b])) for b in model.max_nodes], dtype=np.int64))
            labels.append("sum-product")
        inits += random_configs(model, rng, opts.num_random_inits)
        labels += [f"random-{k}" for k in range(opts.num_random_inits)]
        if not inits:
            inits.append(np.zeros(len(model.max_nodes), dtype=np.int64))
            labels.append("zeros")
    best = None
    runs = []
    for lab, x0 in zip(labels, inits):
        traj = _em_from(model, x0, opts)
        qs = [safe_q(model, x, opts.cap) for x in traj]
        runs.append({"init": lab, "rounds": len(traj), "q_trace": qs})
        k = len(traj) - 1
        score = qs[k] if qs[k] is not None else 0.0
        if best is None or score > best[0] + 1e-12:
            best = (score, traj[k], lab, qs)
    rep = SolveReport("em", best[1], q_value=safe_q(model, best[1], opts.cap),
                      objective_trace=[q for q in best[3] if q is not None], converged=True,
                      iterations=len(best[3]), seed=opts.seed, info={"init": best[2], "runs": runs})
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rep


# ---------------------------------------------------------------------------
# taboo search
# ---------------------------------------------------------------------------

def default_sequential_init(model: PairwiseModel) -> np.ndarray:
    """Fix max nodes in index order, each to the argmax of its sum-product belief given earlier picks."""
    B = [int(b) for b in model.max_nodes]
    node = [np.array(t) for t in model.node_logpot]
    x = np.zeros(len(B), dtype=np.int64)
    for k, b in enumerate(B):
        m = model.with_node_logpot(node)
        marg = sum_product_marginals(m)
        x[k] = int(np.argmax(marg[b]))
        t = np.full(model.cards[b], -np.inf)
        t[x[k]] = node[b][x[k]]
        node[b] = t
    return x


def _neighbor_moves(cards: np.ndarray):
    """Positions and state offsets of all single-site changes, ordered by position then new state."""
    cards = np.asarray(cards, dtype=np.int64)
    pos = np.repeat(np.arange(len(cards)), cards - 1)
    offs = np.concatenate([np.arange(1, c) for c in cards]) if len(cards) else np.zeros(0, dtype=np.int64)
    return pos, offs


def _neighbors(x, cards, pos, offs):
    vals = (x[pos] + offs) % cards[pos]
    rows = np.repeat(x[None, :], len(pos), axis=0)
    rows[np.arange(len(pos)), pos] = vals
    return rows[np.lexsort((vals, pos))]


def hamming_neighbors(x: np.ndarray, cards: np.ndarray) -> np.ndarray:
    cards = np.asarray(cards, dtype=np.int64)
    pos, offs = _neighbor_moves(cards)
    return _neighbors(np.asarray(x, dtype=np.int64), cards, pos, offs)


def taboo_search(model: PairwiseModel, x0, max_steps: int, cap: int = DEFAULT_CAP):
    """Move to the best unvisited Hamming neighbor each step; returns ``(best_x, best_q, steps)``."""
    cards = model.cards[model.max_nodes].astype(np.int64)
    pos, offs = _neighbor_moves(cards)
    kind = np.int64 if float(np.sum(np.log2(cards))) < 62 else object
    stride = np.cumprod(np.concatenate([[1], cards[:-1]]).astype(kind))
    qs = q_structure(model)
    if qs.forest:
        def evaluate(XB):
            return kernels.q_batch(qs, XB)
    else:
        def evaluate(XB):
            return q_values(model, XB, cap)
    x = np.asarray(x0, dtype=np.int64).copy()
    qx = float(q_values(model, x[None, :], cap)[0])
    visited = {int(np.dot(x.astype(kind), stride))}
    best_x, best_q = x.copy(), qx
    steps = 0
    for steps in range(1, max_steps + 1):
        nb = _neighbors(x, cards, pos, offs)
        keys = (nb.astype(kind) @ stride).tolist()
        keep = [k for k in range(len(nb)) if keys[k] not in visited]
        if not keep:
            break
        nb = nb[keep]
        vals = evaluate(nb)
        k = int(np.argmax(vals))
        x, qx = nb[k], float(vals[k])
        visited.add(keys[keep[k]])
        if qx > best_q + 1e-12:
            best_x, best_q = x.copy(), qx
    return best_x, best_q, steps


def run_taboo(model: PairwiseModel, opts: Optional[TabooOptions] = None) -> SolveReport:
    """Taboo local search on exact ``Q``; best of random and sequential starts."""
    opts = opts or TabooOptions()
    t0 = time.perf_counter()
    if len(model.max_nodes) == 0:
        return SolveReport("taboo", np.zeros(0, dtype=np.int64), q_value=safe_q(model, np.zeros(0, dtype=np.int64), opts.cap),
                           converged=True)
    q_structure(model)
    rng = np.random.default_rng(opts.seed)
    inits, labels = [], []
    if opts.init is not None:
        inits.append(np.asarray(opts.init, dtype=np.int64))
        labels.append("given")
    else:
        if opts.use_sequential_init:
            inits.append(default_sequential_init(model))
            labels.append("sequential")
        inits += random_configs(model, rng, opts.num_random_inits)
        labels += [f"random-{k}" for k in range(opts.num_random_inits)]
        if not inits:
            inits.append(np.zeros(len(model.max_nodes), dtype=np.int64))
            labels.append("zeros")
    best = None
    runs = []
    for lab, x0 in zip(labels, inits):
        x, q, steps = taboo_search(model, x0, opts.max_steps, opts.cap)
        runs.append({"init": lab, "q": q, "steps": steps})
        if best is None or q > best[1] + 1e-12:
            best = (x, q, lab)
    rep = SolveReport("taboo", best[0], q_value=best[1], converged=True, iterations=opts.max_steps,
                      seed=opts.seed, info={"init": best[2], "runs": runs,
                                            "semantics": "visited-set taboo, steepest non-taboo move"})
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rep
