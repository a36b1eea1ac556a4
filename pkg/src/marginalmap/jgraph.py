"""Higher-order factor models, join-graph construction and mixed-product junction-graph BP."""
import itertools
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfigurationError, ResourceLimitError
from .logmath import entropy, logsumexp, normalize_log
from .model import PairwiseModel
from .mp.engine import SolveReport, SolverOptions

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Discrete model with arbitrary-scope log-potential tables.

    ``tables[k]`` has shape ``cards[scopes[k]]`` with axes in scope order.
    """

    cards: np.ndarray
    is_max: np.ndarray
    scopes: Tuple[Tuple[int, ...], ...]
    tables: Tuple[np.ndarray, ...]

    def __init__(self, cards, scopes, tables, roles=None):
        cards = np.array(cards, dtype=np.int64)
        if cards.ndim != 1 or np.any(cards < 1):
            raise ValueError("cardinalities must be positive integers")
        n = len(cards)
        scopes = tuple(tuple(int(v) for v in s) for s in scopes)
        tables = tuple(np.array(t, dtype=float) for t in tables)
        if len(scopes) != len(tables):
            raise ValueError("need one table per scope")
        for s, t in zip(scopes, tables):
            if len(set(s)) != len(s):
                raise ValueError(f"scope {s} repeats a variable")
            if any(not 0 <= v < n for v in s):
                raise ValueError(f"scope {s} refers to a missing variable")
            if t.shape != tuple(int(cards[v]) for v in s):
                raise ValueError(f"table for scope {s} has shape {t.shape}")
            if np.any(np.isnan(t)) or np.any(t == np.inf):
                raise ValueError("log-potentials must be finite or -inf")
            t.setflags(write=False)
        if roles is None:
            is_max = np.zeros(n, dtype=bool)
        else:
            is_max = np.array([(r.lower() == "max") if isinstance(r, str) else bool(r) for r in roles], dtype=bool)
            if len(is_max) != n:
                raise ValueError("roles length does not match number of variables")
        cards.setflags(write=False)
        is_max.setflags(write=False)
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "is_max", is_max)
        object.__setattr__(self, "scopes", scopes)
        object.__setattr__(self, "tables", tables)

    @property
    def num_vars(self) -> int:
        return len(self.cards)

    @property
    def max_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.is_max)

    def with_roles(self, roles) -> "FactorModel":
        return FactorModel(self.cards, self.scopes, self.tables, roles)

    def energy(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (self.num_vars,) or np.any(x < 0) or np.any(x >= self.cards):
            raise InvalidConfigurationError("configuration out of range")
        return float(sum(t[tuple(x[list(s)])] for s, t in zip(self.scopes, self.tables)))


def from_pairwise(model: PairwiseModel) -> FactorModel:
    scopes = [(i,) for i in range(model.num_vars)] + list(model.edges)
    tables = list(model.node_logpot) + list(model.edge_logpot)
    return FactorModel(model.cards, scopes, tables, model.is_max)


def to_pairwise(fm: FactorModel) -> PairwiseModel:
    """Fold unary and pairwise factors into a pairwise model; larger scopes are rejected."""
    node = [np.zeros(c) for c in fm.cards]
    pairs: Dict[Tuple[int, int], np.ndarray] = {}
    for s, t in zip(fm.scopes, fm.tables):
        if len(s) == 0:
            # constants ride on the first variable so energies are preserved
            if fm.num_vars:
                node[0] = node[0] + float(t)
        elif len(s) == 1:
            node[s[0]] = node[s[0]] + t
        elif len(s) == 2:
            i, j = s
            tt = t if i < j else t.T
            key = (min(i, j), max(i, j))
            pairs[key] = pairs.get(key, 0.0) + tt
        else:
            raise ValueError("factor scopes larger than two cannot be made pairwise")
    keys = sorted(pairs)
    return PairwiseModel(fm.cards, node, keys, [pairs[k] for k in keys], fm.is_max)


def _align(table, scope, target):
    """Broadcast ``table`` (axes ``scope``) against an array with axes ``target``."""
    if not scope:
        return np.asarray(table).reshape((1,) * len(target))
    order = sorted(range(len(scope)), key=lambda k: target.index(scope[k]))
    t = np.transpose(table, order)
    shape = [1] * len(target)
    for k in order:
        shape[target.index(scope[k])] = table.shape[k]
    return t.reshape(shape)


def factor_energy_tensor(fm: FactorModel, free: Sequence[int], fixed: Dict[int, int]) -> np.ndarray:
    free = tuple(free)
    shape = tuple(int(fm.cards[v]) for v in free)
    out = np.zeros(shape)
    for s, t in zip(fm.scopes, fm.tables):
        idx = tuple(fixed[v] if v in fixed else slice(None) for v in s)
        sub = t[idx]
        rest = tuple(v for v in s if v not in fixed)
        out = out + _align(sub, rest, free)
    return out


def factor_q(fm: FactorModel, x_B, cap: int = 2 ** 26) -> float:
    """Exact ``log sum_{x_A} exp theta`` for a max-node assignment by enumeration."""
    B = [int(b) for b in fm.max_nodes]
    A = [v for v in range(fm.num_vars) if not fm.is_max[v]]
    size = int(np.prod([int(fm.cards[a]) for a in A], dtype=object)) if A else 1
    if size > cap:
        raise ResourceLimitError(f"sum part has {size} states, above the cap of {cap}", size, cap)
    return float(logsumexp(factor_energy_tensor(fm, A, dict(zip(B, [int(v) for v in x_B])))))


# ---------------------------------------------------------------------------
# junction graph
# ---------------------------------------------------------------------------

@dataclass
class JunctionGraph:
    fm: FactorModel
    clusters: List[Tuple[int, ...]]
    factors: List[List[int]]
    edges: List[Tuple[int, int]]
    separators: List[Tuple[int, ...]]
    pi: List[Tuple[int, ...]]
    order: List[int] = field(default_factory=list)
    policy: str = "max-cluster-with-most-max-vars"

    @property
    def max_clusters(self) -> List[int]:
        return [k for k, p in enumerate(self.pi) if p]

    @property
    def sum_clusters(self) -> List[int]:
        return [k for k, p in enumerate(self.pi) if not p]

    def cluster_logpot(self, k: int) -> np.ndarray:
        c = self.clusters[k]
        out = np.zeros(tuple(int(self.fm.cards[v]) for v in c))
        for f in self.factors[k]:
            out = out + _align(self.fm.tables[f], self.fm.scopes[f], c)
        return out

    def energy(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        return float(sum(self.cluster_logpot(k)[tuple(x[list(c)])] for k, c in enumerate(self.clusters)))


def moral_graph(fm: FactorModel) -> List[set]:
    adj = [set() for _ in range(fm.num_vars)]
    for s in fm.scopes:
        for i in s:
            for j in s:
                if i != j:
                    adj[i].add(j)
    return adj


def constrained_min_fill(fm: FactorModel) -> List[int]:
    """Min-fill order that eliminates every sum variable before any max variable."""
    adj = [set(a) for a in moral_graph(fm)]
    remaining = set(range(fm.num_vars))
    order = []
    for group in (False, True):
        cand = {v for v in remaining if bool(fm.is_max[v]) == group}
        while cand:
            def fill(v):
                nb = list(adj[v] & remaining)
                return sum(1 for a, b in itertools.combinations(nb, 2) if b not in adj[a])
            v = min(cand, key=lambda u: (fill(u), u))
            nb = list(adj[v] & remaining)
            for a, b in itertools.combinations(nb, 2):
                adj[a].add(b)
                adj[b].add(a)
            remaining.discard(v)
            cand.discard(v)
            order.append(v)
    return order


def build_junction_graph(fm: FactorModel, ibound: Optional[int] = None,
                         order: Optional[Sequence[int]] = None) -> JunctionGraph:
    """Mini-bucket join graph along a constrained min-fill order.

    Each bucket is split first-fit into mini-buckets of at most ``ibound``
    variables (default: the largest factor scope). Mini-buckets of a bucket are
    chained through the bucket variable, each sends its scope minus that
    variable to the bucket of its earliest-eliminated variable, and clusters
    contained in a neighbor that shares all their variables are merged away.
    """
    n = fm.num_vars
    order = list(order) if order is not None else constrained_min_fill(fm)
    pos = {v: k for k, v in enumerate(order)}
    if ibound is None:
        ibound = max([len(s) for s in fm.scopes] + [1])
    # functions: ("f", factor index, scope) or ("m", source cluster, scope)
    buckets: Dict[int, list] = {v: [] for v in order}
    loose = []
    for f, s in enumerate(fm.scopes):
        if s:
            buckets[min(s, key=pos.get)].append(("f", f, set(s)))
        else:
            loose.append(f)
    clusters: List[set] = []
    factors: List[List[int]] = []
    edges: Dict[Tuple[int, int], set] = {}

    def add_edge(a, b, sep):
        key = (min(a, b), max(a, b))
        edges[key] = edges.get(key, set()) | set(sep)

    for v in order:
        fns = sorted(buckets[v], key=lambda f: -len(f[2]))
        if not fns:
            fns = [("f", None, {v})]
        minis: List[list] = []
        scopes: List[set] = []
        for fn in fns:
            for k, sc in enumerate(scopes):
                if len(sc | fn[2]) <= ibound:
                    minis[k].append(fn)
                    sc |= fn[2]
                    break
            else:
                minis.append([fn])
                scopes.append(set(fn[2]))
        ids = []
        for mb, sc in zip(minis, scopes):
            k = len(clusters)
            clusters.append(set(sc))
            factors.append([fn[1] for fn in mb if fn[0] == "f" and fn[1] is not None])
            for fn in mb:
                if fn[0] == "m":
                    add_edge(fn[1], k, fn[2])
            ids.append(k)
            msg = sc - {v}
            if msg:
                buckets[min(msg, key=pos.get)].append(("m", k, msg))
        for a, b in zip(ids, ids[1:]):
            add_edge(a, b, {v})
    if loose:
        if not clusters:
            clusters.append(set())
            factors.append([])
        factors[0].extend(loose)

    # merge a cluster into a neighbor that contains it when their separator is the whole cluster
    alive = [True] * len(clusters)
    changed = True
    while changed:
        changed = False
        for c in range(len(clusters)):
            if not alive[c]:
                continue
            for (a, b), sep in sorted(edges.items()):
                if c not in (a, b):
                    continue
                d = b if a == c else a
                if clusters[c] <= clusters[d] and sep == clusters[c]:
                    alive[c] = False
                    factors[d].extend(factors[c])
                    factors[c] = []
                    new_edges = {}
                    for (x, y), s in edges.items():
                        if {x, y} == {c, d}:
                            continue
                        x2 = d if x == c else x
                        y2 = d if y == c else y
                        key = (min(x2, y2), max(x2, y2))
                        new_edges[key] = new_edges.get(key, set()) | s
                    edges = new_edges
                    changed = True
                    break
            if changed:
                break

    keep = [k for k in range(len(clusters)) if alive[k]]
    remap = {k: i for i, k in enumerate(keep)}
    cl = [tuple(sorted(clusters[k])) for k in keep]
    fa = [sorted(factors[k]) for k in keep]
    ed = sorted((remap[a], remap[b]) for (a, b) in edges)
    seps = [tuple(sorted(edges[(keep[a], keep[b])] if (keep[a], keep[b]) in edges
                         else edges[(keep[b], keep[a])])) for a, b in ed]
    pi = assign_max_partition(fm, cl)
    return JunctionGraph(fm, cl, fa, ed, seps, pi, order)


def assign_max_partition(fm: FactorModel, clusters: Sequence[Tuple[int, ...]]) -> List[Tuple[int, ...]]:
    """Give each max variable to the containing cluster with the most max variables (lowest index on ties)."""
    nmax = [sum(1 for v in c if fm.is_max[v]) for c in clusters]
    pi: List[List[int]] = [[] for _ in clusters]
    for b in fm.max_nodes:
        cands = [k for k, c in enumerate(clusters) if b in c]
        k = min(cands, key=lambda k: (-nmax[k], k))
        pi[k].append(int(b))
    return [tuple(sorted(p)) for p in pi]


def check_running_intersection(jg: JunctionGraph) -> bool:
    """Every variable's clusters and separators must form a connected tree."""
    for v in range(jg.fm.num_vars):
        nodes = [k for k, c in enumerate(jg.clusters) if v in c]
        if not nodes:
            continue
        es = [(a, b) for (a, b), s in zip(jg.edges, jg.separators) if v in s]
        if any(v not in jg.clusters[a] or v not in jg.clusters[b] for a, b in es):
            return False
        if len(es) != len(nodes) - 1:
            return False
        parent = {k: k for k in nodes}

        def find(k):
            while parent[k] != k:
                parent[k] = parent[parent[k]]
                k = parent[k]
            return k

        for a, b in es:
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        if len({find(k) for k in nodes}) != 1:
            return False
    return True


# ---------------------------------------------------------------------------
# mixed-product junction-graph BP
# ---------------------------------------------------------------------------

class _JGState:
    def __init__(self, jg: JunctionGraph):
        self.jg = jg
        self.logpot = [jg.cluster_logpot(k) for k in range(len(jg.clusters))]
        self.directed = []
        for e, (a, b) in enumerate(jg.edges):
            self.directed.append((a, b, e))
            self.directed.append((b, a, e))
        self.directed.sort()
        self.incoming = {k: [] for k in range(len(jg.clusters))}
        for d, (a, b, e) in enumerate(self.directed):
            self.incoming[b].append(d)
        self.rev = {}
        for d, (a, b, e) in enumerate(self.directed):
            for d2, (a2, b2, e2) in enumerate(self.directed):
                if e2 == e and a2 == b:
                    self.rev[d] = d2

    def uniform(self):
        jg = self.jg
        return [np.zeros(tuple(int(jg.fm.cards[v]) for v in jg.separators[e])) for (_, _, e) in self.directed]

    def belief_log(self, k, msgs, skip=None):
        c = self.jg.clusters[k]
        out = self.logpot[k].copy()
        for d in self.incoming[k]:
            if d == skip:
                continue
            out = out + _align(msgs[d], self.jg.separators[self.directed[d][2]], c)
        return out

    def pi_marginal(self, k, blog):
        c = self.jg.clusters[k]
        p = self.jg.pi[k]
        axes = tuple(a for a, v in enumerate(c) if v not in p)
        return logsumexp(blog, axis=axes) if axes else blog

    def star_mask(self, k, blog, tie_tol):
        """Indicator (in cluster shape) of ``x_pi`` in the argmax set of the pi-marginal."""
        c = self.jg.clusters[k]
        p = self.jg.pi[k]
        pm = self.pi_marginal(k, blog)
        mask = pm >= np.max(pm) - tie_tol
        return _align(mask, p, c)

    def update(self, d, msgs, mode_argmax, tie_tol):
        a, b, e = self.directed[d]
        c = self.jg.clusters[a]
        sep = self.jg.separators[e]
        cav = self.belief_log(a, msgs, skip=self.rev[d])
        if mode_argmax and self.jg.pi[a]:
            full = self.belief_log(a, msgs)
            cav = np.where(self.star_mask(a, full, tie_tol), cav, -np.inf)
        axes = tuple(k for k, v in enumerate(c) if v not in sep)
        out = logsumexp(cav, axis=axes) if axes else cav
        out = np.asarray(out, dtype=float)
        # remaining axes follow the cluster order, which is sorted like the separator
        top = np.max(out)
        return out - top if np.isfinite(top) else np.zeros_like(out)


def _jg_iterate(st: _JGState, msgs, argmax: bool, opts: SolverOptions):
    change = np.inf
    total = opts.max_iters + opts.extra_damped_iters
    for it in range(total):
        damp = 0.0 if it < opts.max_iters else opts.damping
        change = 0.0
        for d in range(len(st.directed)):
            new = st.update(d, msgs, argmax, opts.tie_tol)
            old = msgs[d]
            if damp > 0:
                both = np.isfinite(old) & np.isfinite(new)
                new = np.where(both, (1 - damp) * new + damp * np.where(both, old, 0.0), new)
                top = np.max(new)
                if np.isfinite(top):
                    new = new - top
            fin = ~(np.isneginf(old) & np.isneginf(new))
            if np.any(fin):
                with np.errstate(invalid="ignore"):
                    diff = np.abs(new[fin] - old[fin])
                change = max(change, float(np.max(np.where(np.isnan(diff), np.inf, diff))))
            msgs[d] = new
        if change <= opts.tol:
            return True, it + 1, change
    return False, total, change


def jg_decode(st: _JGState, msgs) -> np.ndarray:
    jg = st.jg
    x = {}
    for k in jg.max_clusters:
        pm = np.asarray(st.pi_marginal(k, st.belief_log(k, msgs)))
        idx = np.unravel_index(int(np.argmax(pm)), pm.shape) if pm.ndim else ()
        for v, s in zip(jg.pi[k], idx):
            x[v] = int(s)
    return np.array([x[int(b)] for b in jg.fm.max_nodes], dtype=np.int64)


def cluster_beliefs(st: _JGState, msgs) -> List[np.ndarray]:
    return [normalize_log(st.belief_log(k, msgs), axis=None) for k in range(len(st.jg.clusters))]


def run_mixed_jgbp(jg: JunctionGraph, opts: Optional[SolverOptions] = None) -> SolveReport:
    """Mixed-product junction-graph BP with best-of-inits selection on exact ``Q`` when affordable."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    st = _JGState(jg)
    rng = np.random.default_rng(opts.seed)
    inits, labels = [], []
    if opts.use_sum_product_init:
        sp = st.uniform()
        _jg_iterate(st, sp, False, opts)
        inits.append(sp)
        labels.append("sum-product")
    for k in range(opts.num_random_inits):
        ms = []
        for m in st.uniform():
            r = rng.standard_normal(m.shape)
            ms.append(r - r.max() if r.size else r)
        inits.append(ms)
        labels.append(f"random-{k}")
    if not inits:
        inits.append(st.uniform())
        labels.append("uniform")
    best = None
    runs = []
    for lab, init in zip(labels, inits):
        msgs = [m.copy() for m in init]
        conv, iters, change = _jg_iterate(st, msgs, True, opts)
        x = jg_decode(st, msgs)
        try:
            q = factor_q(jg.fm, x, opts.cap) if len(x) else None
        except ResourceLimitError:
            q = None
        score = q if q is not None else 0.0
        runs.append({"init": lab, "decode": x.tolist(), "q": q, "converged": conv})
        if best is None or score > best[0] + 1e-12:
            best = (score, x, q, conv, iters, change, msgs, lab)
    _, x, q, conv, iters, change, msgs, lab = best
    rep = SolveReport("mixed-jgbp", x, q_value=q, converged=conv, iterations=iters,
                      residuals={"message_change": change}, seed=opts.seed,
                      info={"init": lab, "runs": runs, "pi_policy": jg.policy,
                            "clusters": [list(c) for c in jg.clusters]})
    rep.info["cluster_beliefs"] = None
    rep.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    rep.messages = msgs
    return rep


def run_sum_jgbp(jg: JunctionGraph, opts: Optional[SolverOptions] = None):
    """Plain sum-product on the junction graph; returns normalized cluster beliefs."""
    opts = opts or SolverOptions()
    st = _JGState(jg)
    msgs = st.uniform()
    conv, _, _ = _jg_iterate(st, msgs, False, opts)
    return cluster_beliefs(st, msgs), conv


def jg_objective(jg: JunctionGraph, beliefs: Sequence[np.ndarray]) -> float:
    """``<theta, tau> + sum_A H_c + sum_B H_{c|pi} - sum_edges H_s`` with separators taken from the first cluster."""
    val = 0.0
    for k, (c, t) in enumerate(zip(jg.clusters, beliefs)):
        th = jg.cluster_logpot(k)
        pos = t > 0
        val += float(np.sum(np.where(pos, th, 0.0) * t))
        val += float(entropy(t))
        if jg.pi[k]:
            axes = tuple(a for a, v in enumerate(c) if v not in jg.pi[k])
            val -= float(entropy(t.sum(axis=axes) if axes else t))
    for (a, b), s in zip(jg.edges, jg.separators):
        c = jg.clusters[a]
        axes = tuple(i for i, v in enumerate(c) if v not in s)
        val -= float(entropy(beliefs[a].sum(axis=axes) if axes else beliefs[a]))
    return val
