"""Message and belief containers plus the maps between them."""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ConsistencyError
from .logmath import logsumexp, normalize_log
from .model import PairwiseModel


@dataclass
class MessageSet:
    """Directed log-messages, one padded row per directed edge.

    Row ``2e`` carries ``edges[e][0] -> edges[e][1]``, row ``2e + 1`` the reverse.
    """

    log: np.ndarray  # (2E, K)

    @classmethod
    def uniform(cls, model: PairwiseModel) -> "MessageSet":
        pm = model.packed
        log = np.full((2 * model.num_edges, pm.K), -np.inf)
        for d in range(2 * model.num_edges):
            log[d, : pm.cards[pm.dst[d]]] = 0.0
        return cls(log)

    @classmethod
    def random(cls, model: PairwiseModel, rng) -> "MessageSet":
        ms = cls.uniform(model)
        pm = model.packed
        for d in range(ms.log.shape[0]):
            k = pm.cards[pm.dst[d]]
            v = rng.standard_normal(k)
            ms.log[d, :k] = v - v.max()
        return ms

    def copy(self) -> "MessageSet":
        return MessageSet(self.log.copy())

    def message(self, model: PairwiseModel, i: int, j: int) -> np.ndarray:
        e = model.edge_index[(min(i, j), max(i, j))]
        d = 2 * e if model.edges[e][0] == i else 2 * e + 1
        return self.log[d, : model.cards[j]]


@dataclass
class BeliefSet:
    """Node tables ``tau_i`` and edge tables ``tau_ij`` (oriented as the model's edges)."""

    node: List[np.ndarray]
    edge: List[np.ndarray]

    def copy(self) -> "BeliefSet":
        return BeliefSet([t.copy() for t in self.node], [t.copy() for t in self.edge])

    def decode(self, nodes) -> np.ndarray:
        """Argmax per node; ties go to the lowest state."""
        return np.array([int(np.argmax(self.node[i])) for i in nodes], dtype=np.int64)

    def consistency_residual(self, model: PairwiseModel) -> float:
        r = 0.0
        for t in self.node:
            r = max(r, abs(t.sum() - 1.0), float(max(0.0, -t.min())))
        for (i, j), t in zip(model.edges, self.edge):
            r = max(r, abs(t.sum() - 1.0), float(max(0.0, -t.min())))
            r = max(r, float(np.abs(t.sum(axis=1) - self.node[i]).max()))
            r = max(r, float(np.abs(t.sum(axis=0) - self.node[j]).max()))
        return r

    def require_consistent(self, model: PairwiseModel, tol: float = 1e-6) -> None:
        r = self.consistency_residual(model)
        if not r <= tol:
            raise ConsistencyError(f"beliefs are not locally consistent (residual {r:.3g})", r)


# mixed beliefs share the container; the type name records which map produced them
MixedBeliefSet = BeliefSet


def point_mass_beliefs(model: PairwiseModel, x) -> BeliefSet:
    node = []
    for i, c in enumerate(model.cards):
        t = np.zeros(c)
        t[x[i]] = 1.0
        node.append(t)
    edge = [np.outer(node[i], node[j]) for i, j in model.edges]
    return BeliefSet(node, edge)


def uniform_beliefs(model: PairwiseModel) -> BeliefSet:
    node = [np.full(c, 1.0 / c) for c in model.cards]
    edge = [np.outer(node[i], node[j]) for i, j in model.edges]
    return BeliefSet(node, edge)


def node_fields(model: PairwiseModel, msgs: MessageSet) -> List[np.ndarray]:
    """``h_i = theta_i + sum_k m_{k->i}`` in log domain."""
    pm = model.packed
    out = []
    for i in range(model.num_vars):
        k = model.cards[i]
        inc = pm.in_idx[pm.in_ptr[i]:pm.in_ptr[i + 1]]
        out.append(model.node_logpot[i] + msgs.log[inc, :k].sum(axis=0))
    return out


def _edge_logs(model, msgs, scaled, w_pair):
    out = []
    for e, (i, j) in enumerate(model.edges):
        ki, kj = model.cards[i], model.cards[j]
        mij = msgs.log[2 * e, :kj]
        mji = msgs.log[2 * e + 1, :ki]
        with np.errstate(invalid="ignore"):
            pair = (model.edge_logpot[e] - mji[:, None] - mij[None, :]) / w_pair[e]
            t = scaled[i][:, None] + scaled[j][None, :] + pair
        # states excluded on either side stay excluded
        t = np.where(np.isneginf(scaled[i])[:, None] | np.isneginf(scaled[j])[None, :], -np.inf, t)
        t = np.where(np.isnan(t), -np.inf, t)
        out.append(t)
    return out


def beliefs_from_messages(model: PairwiseModel, msgs: MessageSet, w_node, w_pair) -> BeliefSet:
    """``tau_i ∝ (psi_i m_~i)^(1/w_i)`` and ``tau_ij ∝ tau_i tau_j (psi_ij / m_ij m_ji)^(1/w_ij)``."""
    w_node = np.asarray(w_node, dtype=float)
    w_pair = np.asarray(w_pair, dtype=float)
    if np.any(w_node <= 0) or np.any(w_pair <= 0):
        raise ValueError("belief weights must be positive")
    h = node_fields(model, msgs)
    scaled = [hi / wi for hi, wi in zip(h, w_node)]
    node = [normalize_log(s) for s in scaled]
    edge = [normalize_log(t, axis=None) for t in _edge_logs(model, msgs, scaled, w_pair)]
    return BeliefSet(node, edge)


def mixed_beliefs(model: PairwiseModel, msgs: MessageSet, rho) -> BeliefSet:
    """``b_i ∝ psi_i m_~i`` and ``b_ij ∝ b_i b_j (psi_ij / m_ij m_ji)^(1/rho_ij)``."""
    h = node_fields(model, msgs)
    node = [normalize_log(s) for s in h]
    edge = [normalize_log(t, axis=None) for t in _edge_logs(model, msgs, h, np.asarray(rho, float))]
    return BeliefSet(node, edge)


def log_beliefs(b: BeliefSet):
    with np.errstate(divide="ignore"):
        return [np.log(t) for t in b.node], [np.log(t) for t in b.edge]
