"""numba switch for the numeric kernels.

Set ``CBU_DISABLE_NUMBA=1`` to force the pure-numpy paths (useful when
debugging or on platforms without an llvmlite wheel).  ``USE_NUMBA`` is read
once at import time; kernels choose their path per call through it.
"""

import os

_FLAG = os.environ.get("CBU_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None

USE_NUMBA = _njit is not None


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if _njit is None:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return _njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
