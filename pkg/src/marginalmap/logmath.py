"""Log-domain helpers that tolerate ``-inf`` entries."""
import numpy as np


def logsumexp(a, axis=None, keepdims=False):
    """Max-shifted log-sum-exp; all ``-inf`` slices give ``-inf`` without warnings."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True))
    out = s + m_safe
    out = np.where(np.isneginf(m), -np.inf, out)
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out if np.ndim(out) else float(out)


def normalize_log(a, axis=-1):
    """Probabilities from unnormalized log values along ``axis``."""
    a = np.asarray(a, dtype=float)
    z = logsumexp(a, axis=axis, keepdims=True)
    with np.errstate(invalid="ignore"):
        p = np.exp(a - z)
    return np.nan_to_num(p, nan=0.0)


def xlogx(p):
    """Elementwise ``p log p`` with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def entropy(p, axis=None):
    return -np.sum(xlogx(p), axis=axis)
