"""Backend selection for the hot kernels.

Set ``MEGCN_DISABLE_NUMBA=1`` to force the pure-numpy implementations, e.g.
when numba is unavailable or when debugging a kernel.
"""

import os

_FLAG = os.environ.get("MEGCN_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

if numba is not None and "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is often too old and numba warns on every parallel launch
    numba.config.THREADING_LAYER = "workqueue"

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


prange = range if numba is None else numba.prange


def set_threads(n):
    """Cap numba's worker pool; no-op on the numpy backend."""
    if numba is None or n is None:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
