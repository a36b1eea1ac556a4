"""Proximal point solvers: a sequence of annealed sum-inference problems."""
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .beliefs import BeliefSet, MessageSet, beliefs_from_messages, mixed_beliefs, uniform_beliefs
from .energy import (ConvexityCertificate, EntropyWeights, bethe_weights, default_num_trees,
                     eval_free_energy, trw_upper_bound, trw_weights)
from .logmath import xlogx
from .model import EDGE_MAX, EDGE_SUM, PairwiseModel
from .mp.checks import check_mixed_consistency
from .mp.engine import SolveReport, SolverOptions, iterate, safe_q, weighted_tables

LOG_FLOOR = -1e6

CONSTANT = "constant"
HARMONIC = "harmonic"


@dataclass
class ProximalOptions:
    lambda_schedule: str = HARMONIC
    max_outer: int = 100
    inner_iters: int = 5
    inner_damped_iters: int = 5
    damping: float = 0.1
    tol: float = 1e-6
    inner_tol: float = 1e-6
    num_trees: Optional[int] = None
    seed: int = 0
    cap: int = 2 ** 26
    use_numba: Optional[bool] = None

    def __post_init__(self):
        if self.lambda_schedule not in (CONSTANT, HARMONIC):
            raise ValueError(f"unknown lambda schedule {self.lambda_schedule!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    def lam(self, t: int) -> float:
        return 1.0 if self.lambda_schedule == CONSTANT else 1.0 / t


def _safe_log(p):
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(p), LOG_FLOOR)


def shifted_model(model: PairwiseModel, beliefs: BeliefSet, rho, lam: float) -> PairwiseModel:
    """``theta + lam * log tau_B`` with ``log tau_B`` in its pairwise form.

    Max nodes get ``lam * log tau_i``; max-max edges get
    ``lam * rho_ij * log(tau_ij / (tau_i tau_j))``.
    """
    node = list(model.node_logpot)
    for i in model.max_nodes:
        node[i] = model.node_logpot[i] + lam * _safe_log(beliefs.node[i])
    edge = list(model.edge_logpot)
    for e, (i, j) in enumerate(model.edges):
        if model.edge_classes[e] == EDGE_MAX:
            mi = _safe_log(beliefs.edge[e]) - _safe_log(beliefs.node[i])[:, None] - _safe_log(beliefs.node[j])[None, :]
            edge[e] = model.edge_logpot[e] + lam * rho[e] * mi
    return PairwiseModel(model.cards, node, model.edges, edge, model.is_max)


def _b_change(model, a: BeliefSet, b: BeliefSet) -> float:
    c = 0.0
    for i in model.max_nodes:
        c = max(c, float(np.abs(a.node[i] - b.node[i]).max()))
    for e in range(model.num_edges):
        if model.edge_classes[e] == EDGE_MAX:
            c = max(c, float(np.abs(a.edge[e] - b.edge[e]).max()))
    return c


def make_weights(model: PairwiseModel, flavor: str, opts: ProximalOptions) -> EntropyWeights:
    flavor = flavor.lower()
    if flavor == "bethe":
        return bethe_weights(model)
    if flavor != "trw":
        raise ValueError(f"unknown flavor {flavor!r}")
    n = opts.num_trees or default_num_trees(model)
    w = trw_weights(model, n, opts.seed)
    # loopy sum parts can leave edges outside every sampled tree; sample more until covered
    while np.any(w.rho[model.edge_classes == EDGE_SUM] == 0) and n < 4096:
        n *= 2
        w = trw_weights(model, n, opts.seed)
    return w


def run_proximal(model: PairwiseModel, flavor: str = "bethe", opts: Optional[ProximalOptions] = None,
                 weights: Optional[EntropyWeights] = None) -> SolveReport:
    """Proximal point iterations with Bethe or TRW pairwise entropies."""
    opts = opts or ProximalOptions()
    t0 = time.perf_counter()
    w0 = weights if weights is not None else make_weights(model, flavor, opts)
    if np.any(w0.rho <= 0):
        raise ValueError("proximal inner solver needs strictly positive rho")
    inner = SolverOptions(max_iters=opts.inner_iters, extra_damped_iters=opts.inner_damped_iters,
                          damping=opts.damping, tol=opts.inner_tol, use_numba=opts.use_numba)
    tau = uniform_beliefs(model)
    msgs = MessageSet.uniform(model)
    has_B = len(model.max_nodes) > 0
    trace, changes = [], []
    converged = False
    inner_change = np.inf
    t = 0
    for t in range(1, opts.max_outer + 1):
        lam = opts.lam(t)
        theta_t = shifted_model(model, tau, w0.rho, lam)
        w = w0.with_epsilon(lam)
        modes, w_src, w_edge = weighted_tables(theta_t, w)
        res = iterate(theta_t, msgs, modes, w_src, w_edge, inner)
        inner_change = res.change
        new_tau = beliefs_from_messages(theta_t, msgs, w.w_node, w.w_pair)
        change = _b_change(model, new_tau, tau)
        tau = new_tau
        changes.append(change)
        try:
            trace.append(float(eval_free_energy(model, tau, w0.with_epsilon(0.0), tol=1e-3)))
        except ValueError:
            trace.append(float("nan"))
        if not has_B or (change <= opts.tol and inner_change <= opts.inner_tol):
            converged = inner_change <= opts.inner_tol
            break
    decode = tau.decode(model.max_nodes)
    residuals = {"belief_change": changes[-1] if changes else 0.0, "message_change": float(inner_change)}
    rep = SolveReport(f"proximal-{flavor.lower()}", decode, objective_trace=trace, converged=converged,
                      iterations=t, residuals=residuals, seed=opts.seed, messages=msgs, beliefs=tau,
                      info={"lambda_schedule": opts.lambda_schedule})
    rep.mixed = mixed_beliefs(theta_t, msgs, w0.rho)
    rep.q_value = safe_q(model, decode, opts.cap) if len(decode) else None
    if flavor.lower() == "trw":
        br = trw_upper_bound(model, tau, w0, residual=max(residuals["belief_change"], float(inner_change)),
                             tol=max(opts.tol, opts.inner_tol))
        rep.bound, rep.bound_valid = br.value, bool(br.valid and converged)
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rep


def _kl(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p > 0) & (q <= 0)):
        raise ValueError("previous beliefs vanish on the support of the current ones")
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.sum(np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(np.where(q > 0, q, 1.0))), 0.0)))


def pairwise_proximal_distance(model: PairwiseModel, tau: BeliefSet, tau_prev: BeliefSet,
                               certificate: ConvexityCertificate) -> float:
    """``sum_i kappa_i KL[tau_i || tau'_i] + sum_{i->j} kappa_ij KL[tau(x_i|x_j) || tau'(x_i|x_j)]``.

    The conditional term is the expected KL under ``tau_ij``.
    """
    d = 0.0
    for i, k in certificate.kappa_node.items():
        if k:
            d += k * _kl(tau.node[i], tau_prev.node[i])
    for (i, j), k in certificate.kappa_dir.items():
        if not k:
            continue
        e = model.edge_index[(min(i, j), max(i, j))]
        t, tp = tau.edge[e], tau_prev.edge[e]
        if model.edges[e][0] != i:
            t, tp = t.T, tp.T  # now indexed [x_i, x_j]
        if np.any((t > 0) & (tp <= 0)):
            raise ValueError("previous beliefs vanish on the support of the current ones")
        cond = t / np.where(t.sum(axis=0) > 0, t.sum(axis=0), 1.0)[None, :]
        cond_p = tp / np.where(tp.sum(axis=0) > 0, tp.sum(axis=0), 1.0)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(t > 0, t * (np.log(np.where(cond > 0, cond, 1.0)) - np.log(np.where(cond_p > 0, cond_p, 1.0))), 0.0)
        d += k * float(term.sum())
    return max(d, 0.0)
