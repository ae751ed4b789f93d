"""Backend selection for the compiled kernels.

Set ``PGFF_DISABLE_NUMBA=1`` to force the pure-numpy code paths.
"""
import os

_DISABLED = os.environ.get("PGFF_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled via PGFF_DISABLE_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if HAS_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def backend():
    return "numba" if HAS_NUMBA else "numpy"
