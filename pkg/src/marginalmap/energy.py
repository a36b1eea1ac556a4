"""Entropy weights (Bethe, TRW, provably convex) and truncated free energies."""
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .beliefs import BeliefSet
from .logmath import entropy
from .model import EDGE_MAX, EDGE_SUM, EDGE_CROSS, PairwiseModel, connected_components


@dataclass(frozen=True)
class ConvexityCertificate:
    """Allocation ``kappa`` showing that the max-part pairwise entropy is concave."""

    kappa_node: Dict[int, float]
    kappa_dir: Dict[Tuple[int, int], float]

    def residual(self, model: PairwiseModel, rho) -> float:
        """Largest violation of the two certificate identities."""
        r = 0.0
        budget = {i: k for i, k in self.kappa_node.items()}
        for (i, j), k in self.kappa_dir.items():
            budget[j] = budget.get(j, 0.0) + k
        for i in model.max_nodes:
            r = max(r, abs(budget.get(int(i), 0.0) - 1.0))
        for e, (i, j) in enumerate(model.edges):
            if model.edge_classes[e] == EDGE_MAX:
                s = self.kappa_dir.get((i, j), 0.0) + self.kappa_dir.get((j, i), 0.0)
                r = max(r, abs(s - rho[e]))
        return r


@dataclass
class EntropyWeights:
    """Pairwise weights ``rho`` and temperature ``epsilon``.

    Node and pair weights are always derived, never stored:
    ``w_i = 1`` on sum nodes and ``epsilon`` on max nodes; ``w_ij = rho_ij`` on
    sum and cross edges and ``epsilon * rho_ij`` on max-max edges.
    """

    rho: np.ndarray
    epsilon: float
    is_max: np.ndarray
    edge_classes: np.ndarray
    certificate: Optional[ConvexityCertificate] = None
    trees: Optional[List[List[int]]] = field(default=None, repr=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.shape != self.edge_classes.shape:
            raise ValueError("need one rho per edge")
        if np.any(self.rho < 0) or not np.all(np.isfinite(self.rho)):
            raise ValueError("rho must be finite and nonnegative")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def w_node(self) -> np.ndarray:
        return np.where(self.is_max, float(self.epsilon), 1.0)

    @property
    def w_pair(self) -> np.ndarray:
        return np.where(self.edge_classes == EDGE_MAX, self.epsilon * self.rho, self.rho)

    def with_epsilon(self, epsilon: float) -> "EntropyWeights":
        return EntropyWeights(self.rho.copy(), float(epsilon), self.is_max, self.edge_classes,
                              self.certificate, self.trees)

    def directed(self, model: PairwiseModel):
        """Per-directed-edge ``(w_src, w_edge)`` arrays in the packed layout."""
        pm = model.packed
        return self.w_node[pm.src], self.w_pair[pm.edge_of]

    def to_json(self) -> str:
        doc = {"rho": self.rho.tolist(), "epsilon": self.epsilon}
        if self.certificate is not None:
            doc["kappa_node"] = {str(k): v for k, v in self.certificate.kappa_node.items()}
            doc["kappa_dir"] = [[i, j, v] for (i, j), v in self.certificate.kappa_dir.items()]
        if self.trees is not None:
            doc["trees"] = self.trees
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, model: PairwiseModel, text: str) -> "EntropyWeights":
        doc = json.loads(text)
        cert = None
        if "kappa_node" in doc:
            cert = ConvexityCertificate({int(k): float(v) for k, v in doc["kappa_node"].items()},
                                        {(int(i), int(j)): float(v) for i, j, v in doc["kappa_dir"]})
        return cls(np.array(doc["rho"], dtype=float), float(doc["epsilon"]), model.is_max,
                   model.edge_classes, cert, doc.get("trees"))


def _weights(model, rho, epsilon, certificate=None, trees=None) -> EntropyWeights:
    return EntropyWeights(np.asarray(rho, dtype=float), float(epsilon), model.is_max.copy(),
                          model.edge_classes.copy(), certificate, trees)


def bethe_weights(model: PairwiseModel, epsilon: float = 0.0) -> EntropyWeights:
    return _weights(model, np.ones(model.num_edges), epsilon)


def convex_weights_B(model: PairwiseModel):
    """Max-max edge weights with a certificate: each node keeps half its budget.

    Returns ``(rho, certificate)`` where ``rho`` has an entry per model edge
    (zero off the max-max edges).
    """
    rho = np.zeros(model.num_edges)
    deg = {int(i): 0 for i in model.max_nodes}
    b_edges = [e for e in range(model.num_edges) if model.edge_classes[e] == EDGE_MAX]
    for e in b_edges:
        i, j = model.edges[e]
        deg[i] += 1
        deg[j] += 1
    kappa_node = {i: (0.5 if d > 0 else 1.0) for i, d in deg.items()}
    kappa_dir = {}
    for e in b_edges:
        i, j = model.edges[e]
        kappa_dir[(i, j)] = 0.5 / deg[j]  # share of j's budget
        kappa_dir[(j, i)] = 0.5 / deg[i]
        rho[e] = kappa_dir[(i, j)] + kappa_dir[(j, i)]
    return rho, ConvexityCertificate(kappa_node, kappa_dir)


def sample_ab_trees(model: PairwiseModel, num_trees: int, rng) -> List[List[int]]:
    """Random A-B subtrees: a spanning forest of the sum part plus one cross edge per component.

    The forest comes from Kruskal on i.i.d. uniform edge weights. Each sum
    component attaches to at most one cross edge, which keeps the subgraph an
    A-B tree; the cross edge is taken from a shuffled cycle so every edge of
    a component appears equally often whenever ``num_trees`` is a multiple of
    the component's cross-edge count.
    """
    if num_trees < 1:
        raise ValueError("num_trees must be at least 1")
    cls = model.edge_classes
    a_edges = [e for e in range(model.num_edges) if cls[e] == EDGE_SUM]
    comps = connected_components(model.num_vars, [model.edges[e] for e in a_edges])
    comp_of = {}
    for k, c in enumerate(comps):
        for v in c:
            comp_of[v] = k
    cross_by_comp: Dict[int, List[int]] = {}
    for e in range(model.num_edges):
        if cls[e] == EDGE_CROSS:
            i, j = model.edges[e]
            a = j if model.is_max[i] else i
            cross_by_comp.setdefault(comp_of[a], []).append(e)
    cycles = {}
    for k, lst in sorted(cross_by_comp.items()):
        perm = list(rng.permutation(len(lst)))
        offset = int(rng.integers(len(lst)))
        cycles[k] = (lst, perm, offset)
    trees = []
    for t in range(num_trees):
        w = rng.random(len(a_edges))
        parent = list(range(model.num_vars))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        tree = []
        for k in np.argsort(w, kind="stable"):
            e = a_edges[k]
            ri, rj = find(model.edges[e][0]), find(model.edges[e][1])
            if ri != rj:
                parent[ri] = rj
                tree.append(e)
        for k, (lst, perm, offset) in cycles.items():
            tree.append(lst[perm[(t + offset) % len(lst)]])
        trees.append(sorted(tree))
    return trees


def trw_weights(model: PairwiseModel, num_trees: int, rng_seed=0, epsilon: float = 0.0) -> EntropyWeights:
    """Edge appearance probabilities of sampled A-B subtrees; max-max edges from a certificate."""
    if num_trees < 1:
        raise ValueError("num_trees must be at least 1")
    rng = np.random.default_rng(rng_seed)
    trees = sample_ab_trees(model, num_trees, rng)
    rho, cert = convex_weights_B(model)
    counts = np.zeros(model.num_edges)
    for tree in trees:
        counts[tree] += 1
    mask = model.edge_classes != EDGE_MAX
    rho[mask] = counts[mask] / num_trees
    return _weights(model, rho, epsilon, cert if np.any(~mask) else None, trees)


def default_num_trees(model: PairwiseModel) -> int:
    """Smallest count that gives every cross edge of every sum component equal weight."""
    counts = {}
    comps = connected_components(
        model.num_vars, [model.edges[e] for e in range(model.num_edges) if model.edge_classes[e] == EDGE_SUM])
    comp_of = {v: k for k, c in enumerate(comps) for v in c}
    for e in range(model.num_edges):
        if model.edge_classes[e] == EDGE_CROSS:
            i, j = model.edges[e]
            k = comp_of[j if model.is_max[i] else i]
            counts[k] = counts.get(k, 0) + 1
    n = 1
    for c in counts.values():
        n = int(np.lcm(n, c))
    return n if n <= 1000 else max(counts.values())


# ---------------------------------------------------------------------------
# free energies
# ---------------------------------------------------------------------------

def expected_energy(model: PairwiseModel, beliefs: BeliefSet) -> float:
    """``<theta, tau>`` with ``0 * (-inf) = 0``."""
    total = 0.0
    tabs = list(zip(model.node_logpot, beliefs.node)) + list(zip(model.edge_logpot, beliefs.edge))
    for th, t in tabs:
        pos = t > 0
        if np.any(np.isneginf(th[pos])):
            return -np.inf
        total += float(np.sum(np.where(pos, th, 0.0) * t))
    return total


def mutual_information(tau_ij, tau_i, tau_j) -> float:
    return float(entropy(tau_i) + entropy(tau_j) - entropy(tau_ij))


def weighted_entropy(model: PairwiseModel, beliefs: BeliefSet, w_node, w_pair) -> float:
    """``sum_i w_i H_i - sum_ij w_ij I_ij``; zero-weight terms are skipped."""
    s = 0.0
    for i, t in enumerate(beliefs.node):
        if w_node[i] != 0:
            s += w_node[i] * float(entropy(t))
    for e, (i, j) in enumerate(model.edges):
        if w_pair[e] != 0:
            s -= w_pair[e] * mutual_information(beliefs.edge[e], beliefs.node[i], beliefs.node[j])
    return s


def eval_free_energy(model: PairwiseModel, beliefs: BeliefSet, weights: EntropyWeights,
                     tol: float = 1e-6) -> float:
    """``<theta, tau> + sum_i w_i H_i - sum_ij w_ij I_ij`` at locally consistent beliefs."""
    beliefs.require_consistent(model, tol)
    return expected_energy(model, beliefs) + weighted_entropy(model, beliefs, weights.w_node, weights.w_pair)


@dataclass
class BoundResult:
    value: float
    valid: bool
    residual: float


def trw_upper_bound(model: PairwiseModel, beliefs: BeliefSet, weights: EntropyWeights,
                    residual: float = 0.0, tol: float = 1e-6) -> BoundResult:
    """Truncated TRW objective at the given beliefs.

    It bounds the marginal MAP value only at the optimum of the TRW problem, so
    the result is flagged valid only when the caller's convergence residual is
    below ``tol``.
    """
    w = weights.with_epsilon(0.0)
    consistent = beliefs.consistency_residual(model) <= max(tol, 1e-6)
    value = expected_energy(model, beliefs) + weighted_entropy(model, beliefs, w.w_node, w.w_pair)
    return BoundResult(float(value), bool(consistent and residual <= tol), float(residual))
