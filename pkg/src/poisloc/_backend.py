"""Backend selection for the numeric kernels.

Set ``POISLOC_BACKEND=numpy`` to force the pure-numpy code path. When numba
is not importable the numpy path is used regardless of the flag.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

REQUESTED = os.environ.get("POISLOC_BACKEND", "numba").strip().lower()
if REQUESTED not in ("numba", "numpy"):
    raise ImportError(f"POISLOC_BACKEND must be 'numba' or 'numpy', got {REQUESTED!r}")

USE_NUMBA = HAVE_NUMBA and REQUESTED == "numba"


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
