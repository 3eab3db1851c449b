"""Optional numba acceleration.

Kernels are written as plain Python over int64 numpy arrays so they run
unchanged without numba. Set ``SALPSIM_NO_JIT=1`` to force the pure
Python path (used by the fallback tests and the benchmark).
"""
import os

_FLAG = os.environ.get("SALPSIM_NO_JIT", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_JIT = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    if USE_JIT:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
