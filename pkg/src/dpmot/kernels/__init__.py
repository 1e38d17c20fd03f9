"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active implementation is picked once at import time from
``DPMOT_BACKEND`` (see :mod:`dpmot._backend`). Both implementations stay
importable as :data:`numpy_impl` and :data:`numba_impl` for benchmarking.
"""
import numpy as np

from .._backend import BACKEND, HAVE_NUMBA
from . import _numpy as numpy_impl

if HAVE_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_impl = numba_impl if BACKEND == "numba" else numpy_impl


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def envelope_argmax(x, y, h):
    """Index and value of the upper envelope ``max_i <x, y_i> + h_i`` per row of ``x``.

    Ties go to the lowest index. ``x`` is (n, d), ``y`` is (m, d), ``h`` is (m,).
    """
    return _impl.envelope_argmax(_f64(x, 2), _f64(y, 2), _f64(h, 1))


def cell_counts(x, y, h):
    """Number of rows of ``x`` falling in each envelope cell."""
    return _impl.cell_counts(_f64(x, 2), _f64(y, 2), _f64(h, 1))


def cell_counts_pair(x, y, h_a, h_b):
    """Cell counts of the same rows under two height vectors, sharing the inner products."""
    return _impl.cell_counts_pair(_f64(x, 2), _f64(y, 2), _f64(h_a, 1), _f64(h_b, 1))


def cross_dist_sum(a, b):
    """``sum_ij |a_i - b_j|`` over all pairs."""
    return _impl.cross_dist_sum(_f64(a, 2), _f64(b, 2))


def within_dist_sum(a):
    """``sum_{i != j} |a_i - a_j|`` over ordered pairs."""
    return _impl.within_dist_sum(_f64(a, 2))


__all__ = [
    "BACKEND",
    "envelope_argmax",
    "cell_counts",
    "cell_counts_pair",
    "cross_dist_sum",
    "within_dist_sum",
    "numpy_impl",
    "numba_impl",
]
