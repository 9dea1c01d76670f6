"""Numba shim.

Set ``SAFDR_NO_NUMBA=1`` to force the pure-numpy kernels (also used when
numba is not importable).
"""
import os
import warnings

_DISABLED = os.environ.get("SAFDR_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    if not _DISABLED:
        warnings.warn("numba is not installed - falling back to numpy kernels")
    HAVE_NUMBA = False

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f
