"""Optional numba acceleration.

Set ``MARGINALMAP_DISABLE_NUMBA=1`` to force the pure-numpy code paths (the
flag is read once, at import time). When numba is not installed the numpy
paths are used automatically.
"""
import logging
import os

logger = logging.getLogger(__name__)

_DISABLED = os.environ.get("MARGINALMAP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by MARGINALMAP_DISABLE_NUMBA")
    import numba

    USE_NUMBA = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

except ImportError as exc:
    logger.debug("numba unavailable, using numpy kernels: %s", exc)
    USE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
