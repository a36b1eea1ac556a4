"""Weighted message passing and its mixed-inference limits."""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import kernels
from ..beliefs import BeliefSet, MessageSet, beliefs_from_messages, mixed_beliefs, node_fields
from ..energy import EntropyWeights, bethe_weights
from ..errors import ResourceLimitError
from ..kernels import MODE_ARGMAX, MODE_MAX, MODE_WEIGHTED
from ..model import PairwiseModel
from ..oracle import DEFAULT_CAP, q_values

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass
class SolverOptions:
    max_iters: int = 50
    extra_damped_iters: int = 100
    damping: float = 0.1
    tol: float = 1e-6
    num_random_inits: int = 5
    use_sum_product_init: bool = True
    seed: int = 0
    tie_tol: float = TIE_TOL
    cap: int = DEFAULT_CAP
    use_numba: Optional[bool] = None

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0 or self.extra_damped_iters < 0 or self.num_random_inits < 0:
            raise ValueError("iteration and init counts must be nonnegative")


@dataclass
class SolveReport:
    algorithm: str
    decode: np.ndarray
    q_value: Optional[float] = None
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    residuals: Dict[str, Optional[float]] = field(default_factory=dict)
    bound: Optional[float] = None
    bound_valid: Optional[bool] = None
    wall_time_ms: float = 0.0
    seed: Optional[int] = None
    info: Dict = field(default_factory=dict)
    messages: Optional[MessageSet] = field(default=None, repr=False)
    beliefs: Optional[BeliefSet] = field(default=None, repr=False)
    mixed: Optional[BeliefSet] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return None if np.isnan(v) else (1e308 if v > 0 else -1e308)
            return v

        return {
            "algorithm": self.algorithm,
            "decode": [int(v) for v in self.decode],
            "q_value": clean(self.q_value),
            "bound": clean(self.bound),
            "bound_valid": self.bound_valid,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residuals": {k: clean(None if v is None else float(v)) for k, v in self.residuals.items()},
            "wall_time_ms": float(self.wall_time_ms),
            "seed": self.seed,
            "info": self.info,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


# ---------------------------------------------------------------------------
# mode / weight tables per directed edge
# ---------------------------------------------------------------------------

def weighted_tables(model: PairwiseModel, weights: EntropyWeights):
    w_src, w_edge = weights.directed(model)
    if np.any(w_src <= 0) or np.any(w_edge <= 0):
        raise ValueError("weighted updates need strictly positive weights")
    return np.full(2 * model.num_edges, MODE_WEIGHTED, dtype=np.int64), w_src, w_edge


def mixed_tables(model: PairwiseModel, rho, b_to_a: int = MODE_ARGMAX):
    """Modes for the zero-temperature limit; ``b_to_a`` picks argmax- or max-product."""
    pm = model.packed
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    src_max = model.is_max[pm.src]
    dst_max = model.is_max[pm.dst]
    modes = np.where(~src_max, MODE_WEIGHTED, np.where(dst_max, MODE_MAX, b_to_a)).astype(np.int64)
    return modes, np.ones(2 * model.num_edges), rho[pm.edge_of]


def weighted_update(model: PairwiseModel, weights: EntropyWeights, msgs: MessageSet, i: int, j: int,
                    damping: float = 0.0) -> np.ndarray:
    """New log message ``i -> j`` for the weighted free energy (max-normalized)."""
    modes, w_src, w_edge = weighted_tables(model, weights)
    return _single_update(model, msgs, i, j, modes, w_src, w_edge, damping, TIE_TOL)


def mixed_update(model: PairwiseModel, rho, msgs: MessageSet, i: int, j: int,
                 tie_tol: float = TIE_TOL, b_to_a: int = MODE_ARGMAX) -> np.ndarray:
    """Sum-, max- or argmax-product message ``i -> j`` chosen by the endpoint roles."""
    modes, w_src, w_edge = mixed_tables(model, rho, b_to_a)
    return _single_update(model, msgs, i, j, modes, w_src, w_edge, 0.0, tie_tol)


def _single_update(model, msgs, i, j, modes, w_src, w_edge, damping, tie_tol):
    pm = model.packed
    e = model.edge_index[(min(i, j), max(i, j))]
    d = 2 * e if model.edges[e][0] == i else 2 * e + 1
    out = kernels.update_edge_numpy(d, pm.theta_node, pm.theta_dir, pm.cards, pm.src, pm.dst, pm.rev,
                                    pm.in_ptr, pm.in_idx, msgs.log, modes[d], w_src[d], w_edge[d], tie_tol)
    new = out[: model.cards[j]]
    if damping > 0:
        old = msgs.log[d, : model.cards[j]]
        both = np.isfinite(old) & np.isfinite(new)
        new = np.where(both, (1 - damping) * new + damping * np.where(both, old, 0.0), new)
        top = new.max()
        if np.isfinite(top):
            new = new - top
    return new


# ---------------------------------------------------------------------------
# iteration driver
# ---------------------------------------------------------------------------

@dataclass
class IterationResult:
    converged: bool
    iterations: int
    change: float
    trace: List[float]


def iterate(model: PairwiseModel, msgs: MessageSet, modes, w_src, w_edge, opts: SolverOptions,
            max_iters: Optional[int] = None, extra: Optional[int] = None) -> IterationResult:
    """Plain sweeps up to ``max_iters``, then damped sweeps until converged or exhausted."""
    pm = model.packed
    max_iters = opts.max_iters if max_iters is None else max_iters
    extra = opts.extra_damped_iters if extra is None else extra
    trace = []
    change = np.inf
    if model.num_edges == 0:
        return IterationResult(True, 0, 0.0, trace)
    for it in range(max_iters + extra):
        damp = 0.0 if it < max_iters else opts.damping
        change = kernels.sweep(pm, msgs.log, modes, w_src, w_edge, damp, opts.tie_tol,
                               use_numba=opts.use_numba)
        trace.append(float(change))
        if change <= opts.tol:
            return IterationResult(True, it + 1, float(change), trace)
    return IterationResult(False, max_iters + extra, float(change), trace)


def one_round(model: PairwiseModel, msgs: MessageSet, modes, w_src, w_edge, tie_tol=TIE_TOL,
              use_numba=None) -> MessageSet:
    """A single asynchronous sweep on a copy of ``msgs``."""
    out = msgs.copy()
    if model.num_edges:
        kernels.sweep(model.packed, out.log, modes, w_src, w_edge, 0.0, tie_tol, use_numba=use_numba)
    return out


def decode_mixed(model: PairwiseModel, b: BeliefSet) -> np.ndarray:
    return b.decode(model.max_nodes)


def safe_q(model: PairwiseModel, x_B, cap: int) -> Optional[float]:
    try:
        return float(q_values(model, np.asarray(x_B)[None, :], cap)[0])
    except ResourceLimitError:
        return None


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def run_generic(model: PairwiseModel, weights: EntropyWeights, opts: Optional[SolverOptions] = None,
                init: Optional[MessageSet] = None):
    """Weighted message passing to convergence; returns ``(messages, beliefs, report)``."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    modes, w_src, w_edge = weighted_tables(model, weights)
    msgs = init.copy() if init is not None else MessageSet.uniform(model)
    res = iterate(model, msgs, modes, w_src, w_edge, opts)
    beliefs = beliefs_from_messages(model, msgs, weights.w_node, weights.w_pair)
    decode = beliefs.decode(model.max_nodes)
    rep = SolveReport("weighted", decode, converged=res.converged, iterations=res.iterations,
                      residuals={"message_change": res.change}, seed=opts.seed,
                      messages=msgs, beliefs=beliefs)
    rep.q_value = safe_q(model, decode, opts.cap) if len(decode) else None
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return msgs, beliefs, rep


def run_annealed(model: PairwiseModel, rho=None, opts: Optional[SolverOptions] = None,
                 schedule: Optional[Callable[[int], float]] = None) -> SolveReport:
    """Weighted message passing with the temperature lowered as ``1/t``."""
    opts = opts or SolverOptions()
    schedule = schedule or (lambda t: 1.0 / t)
    t0 = time.perf_counter()
    rho = np.ones(model.num_edges) if rho is None else np.asarray(rho, dtype=float)
    base = bethe_weights(model)
    base.rho = rho
    msgs = MessageSet.uniform(model)
    trace = []
    change = 0.0
    total = max(1, opts.max_iters)
    for t in range(1, total + 1):
        w = base.with_epsilon(schedule(t))
        modes, w_src, w_edge = weighted_tables(model, w)
        if model.num_edges:
            change = kernels.sweep(model.packed, msgs.log, modes, w_src, w_edge, 0.0, opts.tie_tol,
                                   use_numba=opts.use_numba)
        trace.append(float(change))
    b = mixed_beliefs(model, msgs, rho)
    decode = decode_mixed(model, b)
    rep = SolveReport("annealed", decode, converged=bool(change <= opts.tol), iterations=total,
                      residuals={"message_change": float(change)}, seed=opts.seed, messages=msgs, mixed=b,
                      info={"final_epsilon": schedule(total)})
    rep.beliefs = beliefs_from_messages(model, msgs, base.with_epsilon(schedule(total)).w_node,
                                        base.with_epsilon(schedule(total)).w_pair)
    rep.q_value = safe_q(model, decode, opts.cap) if len(decode) else None
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rep


def _run_tables(model, name, modes, w_src, w_edge, rho, opts, init):
    msgs = init.copy() if init is not None else MessageSet.uniform(model)
    res = iterate(model, msgs, modes, w_src, w_edge, opts)
    b = mixed_beliefs(model, msgs, rho)
    decode = decode_mixed(model, b)
    rep = SolveReport(name, decode, converged=res.converged, iterations=res.iterations,
                      residuals={"message_change": res.change}, seed=opts.seed, messages=msgs, mixed=b,
                      objective_trace=[])
    return rep


def _best_of(model, name, modes, w_src, w_edge, rho, opts, inits, labels):
    t0 = time.perf_counter()
    best = None
    runs = []
    for lab, init in zip(labels, inits):
        rep = _run_tables(model, name, modes, w_src, w_edge, rho, opts, init)
        rep.q_value = safe_q(model, rep.decode, opts.cap) if len(rep.decode) else None
        score = rep.q_value if rep.q_value is not None else approx_q(model, rep.decode, opts)
        runs.append({"init": lab, "decode": [int(v) for v in rep.decode], "score": score,
                     "converged": rep.converged})
        if best is None or score > best[0] + 1e-12:
            best = (score, rep, lab)
    rep = best[1]
    rep.info = {"init": best[2], "runs": runs}
    if rep.q_value is None and len(rep.decode):
        rep.info["approx_q"] = best[0]
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rep


def init_messages(model: PairwiseModel, opts: SolverOptions, with_sum_product: bool):
    rng = np.random.default_rng(opts.seed)
    inits, labels = [], []
    if with_sum_product and opts.use_sum_product_init:
        modes, w_src, w_edge = sum_product_tables(model)
        sp = MessageSet.uniform(model)
        iterate(model, sp, modes, w_src, w_edge, opts)
        inits.append(sp)
        labels.append("sum-product")
    for k in range(opts.num_random_inits):
        inits.append(MessageSet.random(model, rng))
        labels.append(f"random-{k}")
    if not inits:
        inits.append(MessageSet.uniform(model))
        labels.append("uniform")
    return inits, labels


def sum_product_tables(model):
    E2 = 2 * model.num_edges
    return np.full(E2, MODE_WEIGHTED, dtype=np.int64), np.ones(E2), np.ones(E2)


def run_mixed_product(model: PairwiseModel, rho=None, opts: Optional[SolverOptions] = None,
                      init: Optional[MessageSet] = None) -> SolveReport:
    """Mixed-product BP; best decode over the configured initializations."""
    opts = opts or SolverOptions()
    rho = np.ones(model.num_edges) if rho is None else np.asarray(rho, dtype=float)
    modes, w_src, w_edge = mixed_tables(model, rho, MODE_ARGMAX)
    if init is not None:
        inits, labels = [init], ["given"]
    else:
        inits, labels = init_messages(model, opts, True)
    return _best_of(model, "mixed-product", modes, w_src, w_edge, rho, opts, inits, labels)


def run_jiang(model: PairwiseModel, rho=None, opts: Optional[SolverOptions] = None,
              init: Optional[MessageSet] = None) -> SolveReport:
    """Hybrid scheme: sum-product out of sum nodes, max-product out of max nodes."""
    opts = opts or SolverOptions()
    rho = np.ones(model.num_edges) if rho is None else np.asarray(rho, dtype=float)
    modes, w_src, w_edge = mixed_tables(model, rho, MODE_MAX)
    if init is not None:
        inits, labels = [init], ["given"]
    else:
        inits, labels = init_messages(model, opts, True)
    return _best_of(model, "jiang", modes, w_src, w_edge, rho, opts, inits, labels)


def _plain_inits(model, opts):
    inits, labels = init_messages(model, opts, False)
    if opts.use_sum_product_init and labels[0] != "uniform":
        inits.insert(0, MessageSet.uniform(model))
        labels.insert(0, "uniform")
    return inits, labels


def run_sum_product(model: PairwiseModel, opts: Optional[SolverOptions] = None,
                    init: Optional[MessageSet] = None) -> SolveReport:
    """Sum-product BP on the whole model; max nodes decoded from singleton marginals."""
    opts = opts or SolverOptions()
    modes, w_src, w_edge = sum_product_tables(model)
    inits, labels = ([init], ["given"]) if init is not None else _plain_inits(model, opts)
    rep = _best_of(model, "sum-product", modes, w_src, w_edge, np.ones(model.num_edges), opts, inits, labels)
    rep.beliefs = beliefs_from_messages(model, rep.messages, np.ones(model.num_vars), np.ones(model.num_edges))
    return rep


def run_max_product(model: PairwiseModel, opts: Optional[SolverOptions] = None,
                    init: Optional[MessageSet] = None) -> SolveReport:
    """Max-product BP on the whole model; max nodes decoded from max-marginals."""
    opts = opts or SolverOptions()
    E2 = 2 * model.num_edges
    modes = np.full(E2, MODE_MAX, dtype=np.int64)
    inits, labels = ([init], ["given"]) if init is not None else _plain_inits(model, opts)
    return _best_of(model, "max-product", modes, np.ones(E2), np.ones(E2), np.ones(model.num_edges),
                    opts, inits, labels)


# ---------------------------------------------------------------------------
# approximate Q when the sum part is too large to enumerate
# ---------------------------------------------------------------------------

def clamp_max_nodes(model: PairwiseModel, x_B) -> PairwiseModel:
    """Same model with max nodes restricted to ``x_B`` through ``-inf`` node potentials."""
    node = [t.copy() for t in model.node_logpot]
    for v, s in zip(model.max_nodes, x_B):
        t = np.full(model.cards[v], -np.inf)
        t[s] = node[v][s]
        node[v] = t
    return model.with_node_logpot(node)


def approx_q(model: PairwiseModel, x_B, opts: Optional[SolverOptions] = None) -> float:
    """Bethe estimate of ``Q(x_B)`` from sum-product on the clamped model."""
    from ..energy import eval_free_energy

    opts = opts or SolverOptions()
    cm = clamp_max_nodes(model, x_B)
    modes, w_src, w_edge = sum_product_tables(cm)
    msgs = MessageSet.uniform(cm)
    iterate(cm, msgs, modes, w_src, w_edge, opts)
    b = beliefs_from_messages(cm, msgs, np.ones(cm.num_vars), np.ones(cm.num_edges))
    w = bethe_weights(cm, 1.0)
    return eval_free_energy(cm, b, w, tol=1e-3)
