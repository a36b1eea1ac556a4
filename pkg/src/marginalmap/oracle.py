"""Exact inference by enumeration and clamped-forest elimination.

These routines are the ground truth for every approximate solver, so they
never truncate: anything above the enumeration cap raises
:class:`~marginalmap.errors.ResourceLimitError`.
"""
import weakref
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import ResourceLimitError
from .logmath import entropy, logsumexp
from .model import PairwiseModel, connected_components, is_forest

DEFAULT_CAP = 2 ** 26
_CHUNK = 2 ** 18
TIE_TOL = 1e-11


def _check_cap(size, cap, what):
    if size > cap:
        raise ResourceLimitError(f"{what} has {size} states, above the cap of {cap}", size, cap)


def _size(cards) -> int:
    return int(np.prod([int(c) for c in cards], dtype=object)) if len(cards) else 1


# ---------------------------------------------------------------------------
# energy tensors
# ---------------------------------------------------------------------------

def energy_tensor(model: PairwiseModel, free: Sequence[int], fixed: Dict[int, int]) -> np.ndarray:
    """Joint log-potential over ``free`` variables (axes in that order) with the rest fixed."""
    free = list(free)
    pos = {v: k for k, v in enumerate(free)}
    shape = tuple(int(model.cards[v]) for v in free)
    out = np.zeros(shape)
    nd = len(free)

    def bcast(v):
        s = [1] * nd
        s[pos[v]] = shape[pos[v]]
        return s

    for v in range(model.num_vars):
        t = model.node_logpot[v]
        if v in pos:
            out = out + t.reshape(bcast(v))
        else:
            out = out + t[fixed[v]]
    for (i, j), t in zip(model.edges, model.edge_logpot):
        fi, fj = i in pos, j in pos
        if fi and fj:
            s = [1] * nd
            if pos[i] < pos[j]:
                s[pos[i]], s[pos[j]] = shape[pos[i]], shape[pos[j]]
                out = out + t.reshape(s)
            else:
                s[pos[j]], s[pos[i]] = shape[pos[j]], shape[pos[i]]
                out = out + t.T.reshape(s)
        elif fi:
            out = out + t[:, fixed[j]].reshape(bcast(i))
        elif fj:
            out = out + t[fixed[i], :].reshape(bcast(j))
        else:
            out = out + t[fixed[i], fixed[j]]
    return np.broadcast_to(out, shape) if out.shape != shape else out


def _split_lead(cards, chunk=_CHUNK):
    """Number of leading variables to enumerate explicitly so each tail tensor fits ``chunk``."""
    n = len(cards)
    s = 0
    while s < n and _size(cards[s:]) > chunk:
        s += 1
    return s


def _iter_joint(model: PairwiseModel):
    """Yield ``(lead_assignment, tail_vars, tail_energy_tensor)`` covering every configuration."""
    n = model.num_vars
    s = _split_lead(model.cards)
    lead = list(range(s))
    tail = list(range(s, n))
    for idx in np.ndindex(*[int(model.cards[v]) for v in lead]):
        fixed = dict(zip(lead, idx))
        yield fixed, tail, energy_tensor(model, tail, fixed)


# ---------------------------------------------------------------------------
# clamped-forest structure for Q(x_B)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QStructure:
    B: np.ndarray
    A: np.ndarray
    forest: bool
    base: np.ndarray
    cross_a: np.ndarray
    cross_b: np.ndarray
    cross_tab: np.ndarray
    child: np.ndarray
    parent: np.ndarray
    ctab: np.ndarray
    roots: np.ndarray
    b_theta: np.ndarray
    eb1: np.ndarray
    eb2: np.ndarray
    eb_tab: np.ndarray


_QS_CACHE: "weakref.WeakKeyDictionary[PairwiseModel, QStructure]" = weakref.WeakKeyDictionary()


def q_structure(model: PairwiseModel) -> QStructure:
    qs = _QS_CACHE.get(model)
    if qs is None:
        qs = _build_q_structure(model)
        _QS_CACHE[model] = qs
    return qs


def _build_q_structure(model: PairwiseModel) -> QStructure:
    K = int(model.cards.max()) if model.num_vars else 1
    B = model.max_nodes
    A = model.sum_nodes
    slotB = {int(v): k for k, v in enumerate(B)}
    slotA = {int(v): k for k, v in enumerate(A)}
    nA, nB = len(A), len(B)

    def pad2(t):
        out = np.full((K, K), -np.inf)
        out[: t.shape[0], : t.shape[1]] = t
        return out

    base = np.full((nA, K), -np.inf)
    for v, k in slotA.items():
        base[k, : model.cards[v]] = model.node_logpot[v]
    b_theta = np.full((nB, K), -np.inf)
    for v, k in slotB.items():
        b_theta[k, : model.cards[v]] = model.node_logpot[v]

    cross_a, cross_b, cross_tab = [], [], []
    eb1, eb2, eb_tab = [], [], []
    a_edges = []
    for (i, j), t in zip(model.edges, model.edge_logpot):
        mi, mj = model.is_max[i], model.is_max[j]
        if mi and mj:
            eb1.append(slotB[i])
            eb2.append(slotB[j])
            eb_tab.append(pad2(t))
        elif mi:
            cross_a.append(slotA[j])
            cross_b.append(slotB[i])
            cross_tab.append(pad2(t.T))
        elif mj:
            cross_a.append(slotA[i])
            cross_b.append(slotB[j])
            cross_tab.append(pad2(t))
        else:
            a_edges.append((slotA[i], slotA[j], t))

    forest = is_forest(nA, [(a, b) for a, b, _ in a_edges])
    child, parent, ctab, roots = [], [], [], []
    if forest:
        nb = [[] for _ in range(nA)]
        for a, b, t in a_edges:
            nb[a].append((b, t))  # t indexed [x_a, x_b]
            nb[b].append((a, t.T))
        for comp in connected_components(nA, [(a, b) for a, b, _ in a_edges]):
            root = min(comp)
            roots.append(root)
            order, par = [root], {root: (None, None)}
            k = 0
            while k < len(order):
                v = order[k]
                k += 1
                for u, t in sorted(nb[v], key=lambda z: z[0]):
                    if u not in par:
                        par[u] = (v, t.T)  # indexed [x_u, x_v]
                        order.append(u)
            for u in reversed(order[1:]):
                p, t = par[u]
                child.append(u)
                parent.append(p)
                ctab.append(pad2(t))

    def arr(x, dtype=np.int64):
        return np.array(x, dtype=dtype)

    def tabs(x):
        return np.array(x, dtype=float).reshape(-1, K, K)

    return QStructure(
        B=B, A=A, forest=forest, base=base,
        cross_a=arr(cross_a), cross_b=arr(cross_b), cross_tab=tabs(cross_tab),
        child=arr(child), parent=arr(parent), ctab=tabs(ctab), roots=arr(roots),
        b_theta=b_theta, eb1=arr(eb1), eb2=arr(eb2), eb_tab=tabs(eb_tab),
    )


def q_values(model: PairwiseModel, XB, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``Q`` for each row of ``XB`` (states of the max nodes in index order)."""
    XB = np.atleast_2d(np.asarray(XB, dtype=np.int64))
    B = model.max_nodes
    if XB.shape[1] != len(B):
        raise ValueError(f"expected {len(B)} max-node states per row, got {XB.shape[1]}")
    if np.any(XB < 0) or np.any(XB >= model.cards[B][None, :]):
        from .errors import InvalidConfigurationError
        raise InvalidConfigurationError("max-node state out of range")
    qs = q_structure(model)
    if qs.forest:
        return kernels.q_batch(qs, XB)
    A = [int(a) for a in qs.A]
    _check_cap(_size(model.cards[A]), cap, "sum part")
    out = np.empty(len(XB))
    for r, xb in enumerate(XB):
        fixed = {int(v): int(s) for v, s in zip(B, xb)}
        out[r] = logsumexp(energy_tensor(model, A, fixed))
    return out


def q_value(model: PairwiseModel, x_B, cap: int = DEFAULT_CAP) -> float:
    """Exact log-marginal ``log sum_{x_A} exp theta(x)`` of a max-node assignment."""
    return float(q_values(model, np.asarray(x_B, dtype=np.int64)[None, :], cap)[0])


def enumerate_max_configs(model: PairwiseModel, cap: int = DEFAULT_CAP, batch: int = 2 ** 16):
    """Yield blocks of max-node configurations in lexicographic order."""
    cards = [int(c) for c in model.cards[model.max_nodes]]
    total = _size(cards)
    _check_cap(total, cap, "max part")
    if not cards:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    radix = np.cumprod([1] + cards[::-1][:-1])[::-1]
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total), dtype=np.int64)
        yield (idx[:, None] // radix[None, :]) % np.array(cards)[None, :]


def all_q_values(model: PairwiseModel, cap: int = DEFAULT_CAP) -> Tuple[np.ndarray, np.ndarray]:
    """All max-node configurations (lexicographic) with their ``Q`` values."""
    confs, vals = [], []
    for XB in enumerate_max_configs(model, cap):
        confs.append(XB)
        vals.append(q_values(model, XB, cap))
    return np.concatenate(confs), np.concatenate(vals)


def marginal_map_exact(model: PairwiseModel, cap: int = DEFAULT_CAP) -> Tuple[np.ndarray, float]:
    """Global marginal MAP; ties go to the lexicographically smallest configuration."""
    best_x, best_v = None, -np.inf
    for XB in enumerate_max_configs(model, cap):
        vals = q_values(model, XB, cap)
        k = int(np.argmax(vals))
        if best_x is None or vals[k] > best_v + TIE_TOL:
            top = vals[k]
            k = int(np.flatnonzero(vals >= top - TIE_TOL)[0])
            best_x, best_v = XB[k].copy(), float(vals[k])
    return best_x, best_v


def smoothed_phi(model: PairwiseModel, eps: float, cap: int = DEFAULT_CAP) -> float:
    """``eps * log sum_{x_B} exp(Q(x_B) / eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    parts = [logsumexp(q_values(model, XB, cap) / eps) for XB in enumerate_max_configs(model, cap)]
    return float(eps * logsumexp(np.array(parts)))


# ---------------------------------------------------------------------------
# full enumeration
# ---------------------------------------------------------------------------

def log_partition_exact(model: PairwiseModel, cap: int = DEFAULT_CAP) -> float:
    _check_cap(_size(model.cards), cap, "joint space")
    parts = [logsumexp(t) for _, _, t in _iter_joint(model)]
    return float(logsumexp(np.array(parts)))


def map_exact(model: PairwiseModel, cap: int = DEFAULT_CAP) -> Tuple[np.ndarray, float]:
    """Joint MAP configuration; ties go to the lexicographically smallest."""
    _check_cap(_size(model.cards), cap, "joint space")
    best_x, best_v = None, -np.inf
    for fixed, tail, t in _iter_joint(model):
        flat = np.ravel(t)
        k = int(np.argmax(flat))
        if best_x is None or flat[k] > best_v + TIE_TOL:
            k = int(np.flatnonzero(flat >= flat[k] - TIE_TOL)[0])
            x = np.empty(model.num_vars, dtype=np.int64)
            for v, s in fixed.items():
                x[v] = s
            if tail:
                x[tail] = np.unravel_index(k, t.shape)
            best_x, best_v = x, float(flat[k])
    return best_x, best_v


def joint_distribution(model: PairwiseModel, cap: int = 2 ** 22) -> np.ndarray:
    """Normalized joint probability tensor (axes in variable order)."""
    _check_cap(_size(model.cards), cap, "joint space")
    t = energy_tensor(model, list(range(model.num_vars)), {})
    return np.exp(t - logsumexp(t))


def marginals_exact(model: PairwiseModel, cap: int = DEFAULT_CAP):
    """Node and edge marginal tables of the normalized distribution."""
    _check_cap(_size(model.cards), cap, "joint space")
    logz = log_partition_exact(model, cap)
    n = model.num_vars
    node = [np.zeros(c) for c in model.cards]
    edge = [np.zeros(t.shape) for t in model.edge_logpot]
    for fixed, tail, t in _iter_joint(model):
        p = np.exp(t - logz)
        pos = {v: k for k, v in enumerate(tail)}
        mass = p.sum()
        for v in range(n):
            if v in pos:
                ax = tuple(k for k in range(len(tail)) if k != pos[v])
                node[v] += p.sum(axis=ax)
            else:
                node[v][fixed[v]] += mass
        for e, (i, j) in enumerate(model.edges):
            if i in pos and j in pos:
                ax = tuple(k for k in range(len(tail)) if k not in (pos[i], pos[j]))
                m = p.sum(axis=ax)
                edge[e] += m if pos[i] < pos[j] else m.T
            elif i in pos:
                ax = tuple(k for k in range(len(tail)) if k != pos[i])
                edge[e][:, fixed[j]] += p.sum(axis=ax)
            elif j in pos:
                ax = tuple(k for k in range(len(tail)) if k != pos[j])
                edge[e][fixed[i], :] += p.sum(axis=ax)
            else:
                edge[e][fixed[i], fixed[j]] += mass
    return node, edge


@dataclass
class ExactResult:
    log_partition: float
    node_marginals: List[np.ndarray]
    edge_marginals: List[np.ndarray]
    map_config: np.ndarray
    map_value: float
    mmap_config: np.ndarray
    mmap_value: float


def exact_inference(model: PairwiseModel, cap: int = DEFAULT_CAP) -> ExactResult:
    node, edge = marginals_exact(model, cap)
    xm, vm = map_exact(model, cap)
    xb, vb = marginal_map_exact(model, cap)
    return ExactResult(log_partition_exact(model, cap), node, edge, xm, vm, xb, vb)


def conditional_entropy_exact(joint, max_axes: Sequence[int]) -> float:
    """``H(A|B) = H(joint) - H(B)`` for a normalized joint tensor, ``B`` given by axes."""
    joint = np.asarray(joint, dtype=float)
    if abs(joint.sum() - 1.0) > 1e-9:
        raise ValueError("joint table must be normalized")
    max_axes = tuple(sorted(max_axes))
    sum_axes = tuple(k for k in range(joint.ndim) if k not in max_axes)
    pB = joint.sum(axis=sum_axes) if sum_axes else joint
    return float(entropy(joint) - entropy(pB))


def model_conditional_entropy(model: PairwiseModel, cap: int = 2 ** 22) -> float:
    """Conditional entropy of the sum part given the max part under the model's distribution."""
    return conditional_entropy_exact(joint_distribution(model, cap), [int(b) for b in model.max_nodes])
