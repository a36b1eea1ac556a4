"""Hot loops: message sweeps and clamped-forest log-marginals.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorized numpy version. ``USE_NUMBA`` picks the default; both are importable
so they can be checked against each other.
"""
import numpy as np

from ._jit import USE_NUMBA, njit
from .logmath import logsumexp

# message update modes
MODE_WEIGHTED = 0  # [sum_xi (psi_i m_~i)^(1/w_i) (psi_ij/m_ji)^(1/w_ij)]^w_ij
MODE_MAX = 1  # max_xi (psi_i m_~i)^rho (psi_ij/m_ji)
MODE_ARGMAX = 2  # weighted sum restricted to argmax of psi_i m_~i

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# message sweeps
# ---------------------------------------------------------------------------

@njit
def _update_edge_numba(d, theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx,
                       msgs, mode, w_i, w_ij, tie_tol, out):
    # the summand is written as cav/w_i + m_ji (1/w_i - 1/w_ij) + theta/w_ij (cav excludes
    # m_ji), so -inf messages stay well defined: a state with m_ji = -inf is dropped
    # whenever its coefficient is nonzero
    i = src[d]
    j = dst[d]
    r = rev[d]
    ki = cards[i]
    kj = cards[j]
    K = theta_node.shape[1]
    cav = np.empty(K)
    for x in range(ki):
        s = theta_node[i, x]
        for p in range(in_ptr[i], in_ptr[i + 1]):
            k = in_idx[p]
            if k != r:
                s += msgs[k, x]
        cav[x] = s
    mji = msgs[r]
    if mode == MODE_MAX:
        a = w_ij
        b = 1.0
        c = w_ij - 1.0
    else:
        a = 1.0 / w_i
        b = 1.0 / w_ij
        c = 1.0 / w_i - 1.0 / w_ij
    base = np.empty(K)
    for x in range(ki):
        v = NEG_INF
        if cav[x] > NEG_INF:
            v = a * cav[x]
            if c != 0.0:
                if mji[x] == NEG_INF:
                    v = NEG_INF
                else:
                    v += c * mji[x]
        base[x] = v
    if mode == MODE_ARGMAX:
        best = NEG_INF
        for x in range(ki):
            h = cav[x] + mji[x]
            if h > best:
                best = h
        for x in range(ki):
            h = cav[x] + mji[x]
            if not (best > NEG_INF and h >= best - tie_tol):
                base[x] = NEG_INF
    vals = np.empty(K)
    for y in range(K):
        out[y] = NEG_INF
    for y in range(kj):
        m = NEG_INF
        for x in range(ki):
            v = base[x]
            if v > NEG_INF:
                v += b * theta_dir[d, x, y]
            vals[x] = v
            if v > m:
                m = v
        if mode == MODE_MAX or m == NEG_INF:
            out[y] = m
        else:
            s = 0.0
            for x in range(ki):
                s += np.exp(vals[x] - m)
            out[y] = w_ij * (m + np.log(s))
    top = NEG_INF
    for y in range(kj):
        if out[y] > top:
            top = out[y]
    if top == NEG_INF:
        for y in range(kj):
            out[y] = 0.0
    else:
        for y in range(kj):
            out[y] -= top


@njit
def _sweep_numba(theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx, order,
                 modes, w_src, w_edge, msgs, damping, tie_tol):
    K = theta_node.shape[1]
    out = np.empty(K)
    change = 0.0
    for t in range(order.shape[0]):
        d = order[t]
        _update_edge_numba(d, theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx,
                           msgs, modes[d], w_src[d], w_edge[d], tie_tol, out)
        kj = cards[dst[d]]
        if damping > 0.0:
            top = NEG_INF
            for y in range(kj):
                old = msgs[d, y]
                if old > NEG_INF and out[y] > NEG_INF:
                    out[y] = (1.0 - damping) * out[y] + damping * old
                if out[y] > top:
                    top = out[y]
            if top > NEG_INF:
                for y in range(kj):
                    out[y] -= top
        for y in range(kj):
            old = msgs[d, y]
            new = out[y]
            if not (old == NEG_INF and new == NEG_INF):
                diff = abs(new - old)
                if diff > change:
                    change = diff
            msgs[d, y] = new
    return change


def update_edge_numpy(d, theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx,
                      msgs, mode, w_i, w_ij, tie_tol):
    """New log message on directed edge ``d`` (max-normalized, padded with -inf)."""
    i, j, r = src[d], dst[d], rev[d]
    ki, kj = cards[i], cards[j]
    K = theta_node.shape[1]
    inc = in_idx[in_ptr[i]:in_ptr[i + 1]]
    inc = inc[inc != r]
    cav = theta_node[i, :ki] + msgs[inc, :ki].sum(axis=0)
    mji = msgs[r, :ki]
    theta = theta_dir[d, :ki, :kj]
    mask = np.isfinite(cav)
    if mode == MODE_ARGMAX:
        h = cav + mji
        best = h.max()
        mask &= np.isfinite(best) & (h >= best - tie_tol)
    if mode == MODE_MAX:
        base = w_ij * cav
        c = w_ij - 1.0
    else:
        base = cav / w_i
        c = 1.0 / w_i - 1.0 / w_ij
        theta = theta / w_ij
    with np.errstate(invalid="ignore"):
        if c != 0.0:
            extra = np.where(np.isneginf(mji), -np.inf, c * np.where(np.isneginf(mji), 0.0, mji))
        else:
            extra = np.zeros(ki)
        vals = np.where(mask, base + extra, -np.inf)[:, None] + theta
    vals = np.where(mask[:, None], vals, -np.inf)
    if mode == MODE_MAX:
        new = vals.max(axis=0)
    else:
        new = w_ij * logsumexp(vals, axis=0)
    new = np.asarray(new, dtype=float)
    top = new.max()
    new = np.zeros(kj) if not np.isfinite(top) else new - top
    out = np.full(K, -np.inf)
    out[:kj] = new
    return out


def _sweep_numpy(theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx, order,
                 modes, w_src, w_edge, msgs, damping, tie_tol):
    change = 0.0
    for d in order:
        new = update_edge_numpy(d, theta_node, theta_dir, cards, src, dst, rev, in_ptr, in_idx,
                                msgs, modes[d], w_src[d], w_edge[d], tie_tol)
        kj = cards[dst[d]]
        old = msgs[d, :kj]
        new = new[:kj]
        if damping > 0.0:
            both = np.isfinite(old) & np.isfinite(new)
            new = np.where(both, (1.0 - damping) * new + damping * np.where(both, old, 0.0), new)
            top = new.max()
            if np.isfinite(top):
                new = new - top
        fin = ~(np.isneginf(old) & np.isneginf(new))
        if fin.any():
            with np.errstate(invalid="ignore"):
                diff = np.abs(new[fin] - old[fin])
            change = max(change, float(np.nanmax(np.where(np.isnan(diff), np.inf, diff))))
        msgs[d, :kj] = new
    return change


def sweep(pm, msgs, modes, w_src, w_edge, damping=0.0, tie_tol=1e-9, order=None, use_numba=None):
    """One asynchronous pass over the directed edges; updates ``msgs`` in place.

    Returns the largest absolute change of any finite log-message entry.
    """
    if order is None:
        order = pm.order
    fn = _sweep_numba if (USE_NUMBA if use_numba is None else use_numba) else _sweep_numpy
    return fn(pm.theta_node, pm.theta_dir, pm.cards, pm.src, pm.dst, pm.rev, pm.in_ptr,
              pm.in_idx, np.asarray(order, dtype=np.int64), np.asarray(modes, dtype=np.int64),
              np.asarray(w_src, dtype=float), np.asarray(w_edge, dtype=float), msgs,
              float(damping), float(tie_tol))


# ---------------------------------------------------------------------------
# log-marginal Q(x_B) when the clamped sum part is a forest
# ---------------------------------------------------------------------------

@njit
def _q_one_numba(xb, base, cross_a, cross_b, cross_tab, child, parent, ctab, roots,
                 b_theta, eb1, eb2, eb_tab, U):
    K = base.shape[1]
    total = 0.0
    for s in range(xb.shape[0]):
        total += b_theta[s, xb[s]]
    for e in range(eb1.shape[0]):
        total += eb_tab[e, xb[eb1[e]], xb[eb2[e]]]
    for a in range(base.shape[0]):
        for k in range(K):
            U[a, k] = base[a, k]
    for c in range(cross_a.shape[0]):
        a = cross_a[c]
        v = xb[cross_b[c]]
        for k in range(K):
            U[a, k] += cross_tab[c, k, v]
    for t in range(child.shape[0]):
        ch = child[t]
        p = parent[t]
        for kp in range(K):
            m = NEG_INF
            for kc in range(K):
                v = U[ch, kc] + ctab[t, kc, kp]
                if v > m:
                    m = v
            if m == NEG_INF:
                U[p, kp] = NEG_INF
                continue
            s = 0.0
            for kc in range(K):
                s += np.exp(U[ch, kc] + ctab[t, kc, kp] - m)
            U[p, kp] += m + np.log(s)
    for r in range(roots.shape[0]):
        a = roots[r]
        m = NEG_INF
        for k in range(K):
            if U[a, k] > m:
                m = U[a, k]
        if m == NEG_INF:
            return NEG_INF
        s = 0.0
        for k in range(K):
            s += np.exp(U[a, k] - m)
        total += m + np.log(s)
    return total


@njit
def _q_batch_numba(XB, base, cross_a, cross_b, cross_tab, child, parent, ctab, roots,
                   b_theta, eb1, eb2, eb_tab):
    out = np.empty(XB.shape[0])
    U = np.empty(base.shape)
    for m in range(XB.shape[0]):
        out[m] = _q_one_numba(XB[m], base, cross_a, cross_b, cross_tab, child, parent, ctab,
                              roots, b_theta, eb1, eb2, eb_tab, U)
    return out


def _q_batch_numpy(XB, base, cross_a, cross_b, cross_tab, child, parent, ctab, roots,
                   b_theta, eb1, eb2, eb_tab):
    M = XB.shape[0]
    total = np.zeros(M)
    for s in range(XB.shape[1]):
        total += b_theta[s, XB[:, s]]
    for e in range(len(eb1)):
        total += eb_tab[e, XB[:, eb1[e]], XB[:, eb2[e]]]
    U = np.broadcast_to(base, (M,) + base.shape).copy()
    for c in range(len(cross_a)):
        U[:, cross_a[c], :] += cross_tab[c][:, XB[:, cross_b[c]]].T
    for t in range(len(child)):
        msg = logsumexp(U[:, child[t], :, None] + ctab[t][None], axis=1)
        U[:, parent[t], :] += msg
    for r in roots:
        total += logsumexp(U[:, r, :], axis=1)
    return total


def q_batch(qs, XB, use_numba=None):
    """Evaluate ``Q`` for each row of ``XB`` (states of the max nodes, in order)."""
    XB = np.ascontiguousarray(XB, dtype=np.int64)
    if XB.ndim == 1:
        XB = XB[None, :]
    fn = _q_batch_numba if (USE_NUMBA if use_numba is None else use_numba) else _q_batch_numpy
    return fn(XB, qs.base, qs.cross_a, qs.cross_b, qs.cross_tab, qs.child, qs.parent, qs.ctab,
              qs.roots, qs.b_theta, qs.eb1, qs.eb2, qs.eb_tab)
