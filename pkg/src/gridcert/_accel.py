"""Numba switch.

Set ``GRIDCERT_NUMBA=0`` to force the pure-numpy kernels. When the variable is
unset, numba is used if it can be imported.
"""
import os

_flag = os.environ.get("GRIDCERT_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - depends on environment
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _flag not in ("0", "false", "no", "off")


def njit(func):
    """Compile ``func`` with numba if available, else return it unchanged."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True, nogil=True)(func)
