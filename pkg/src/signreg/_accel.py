"""Selection between numba-compiled kernels and the pure-numpy fallback.

Set ``SIGNREG_DISABLE_NUMBA=1`` in the environment before import to force the
numpy path (also used automatically when numba is not importable).
"""

import os

_FLAG = "SIGNREG_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is present; else return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
