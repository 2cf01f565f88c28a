"""Optional numba acceleration.

Set ``WHQUANT_BACKEND=numpy`` to run the pure-numpy fallbacks even when
numba is importable.
"""
import os

BACKEND = os.environ.get("WHQUANT_BACKEND", "numba").strip().lower()

try:
    if BACKEND == "numpy":
        raise ImportError
    from numba import njit, prange
    import numba

    # the system TBB is often older than numba accepts; prefer OpenMP, then the portable queue
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f


def set_threads(n):
    """Set the numba thread count; a no-op on the numpy backend."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
