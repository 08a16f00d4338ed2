"""JIT switch for the hot kernels.

Every kernel exists twice: a scalar loop compiled with numba and a
vectorized numpy version.  ``TROTTERBENCH_DISABLE_JIT=1`` (or a missing
numba install) makes the numpy versions the default dispatch target.
Both stay importable so they can be compared against each other.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "TROTTERBENCH_DISABLE_JIT"

USE_JIT = HAVE_NUMBA and os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes")


def njit(func):
    """``numba.njit(nogil=True, cache=True)`` when numba is present, else identity."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(nogil=True, cache=True)(func)
