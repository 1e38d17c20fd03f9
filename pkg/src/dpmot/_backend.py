"""Backend selection for the hot kernels.

Set ``DPMOT_BACKEND=numpy`` to force the pure-numpy path, ``DPMOT_BACKEND=numba``
to require numba. Unset: numba when importable, numpy otherwise.
"""
import os
import warnings

# prefer OpenMP over an outdated system TBB; the order only affects which
# threading layer numba loads, never the results
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

_requested = os.environ.get("DPMOT_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"DPMOT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    if _requested == "numba":
        raise
    if _requested == "":
        warnings.warn("numba not importable; falling back to numpy kernels")

BACKEND = "numpy" if (_requested == "numpy" or not HAVE_NUMBA) else "numba"


def set_threads(n):
    """Bound the numba worker pool. No-op on the numpy backend."""
    if n is None or not HAVE_NUMBA:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
