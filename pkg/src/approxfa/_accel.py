"""JIT switch for the hot kernels.

Kernels are written in plain numpy so that they run unchanged without
numba. Set ``APPROXFA_DISABLE_JIT=1`` to force the pure-numpy path; the
flag is read once at import time.
"""

import os

_FLAG = os.environ.get("APPROXFA_DISABLE_JIT", "").strip().lower()

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

USE_NUMBA = _njit is not None and _FLAG in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(func):
    """Compile ``func`` with numba in nopython mode, or return it untouched."""
    if not USE_NUMBA:
        return func
    return _njit(cache=True, nogil=True)(func)
