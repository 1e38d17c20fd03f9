"""numba-compiled kernels; same contracts as ``_numpy``.

Row-parallel loops write per-row partials that are reduced sequentially
afterwards, so results do not depend on the thread count.
"""
import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def envelope_argmax(x, y, h):
    n, d = x.shape
    m = y.shape[0]
    idx = np.empty(n, dtype=np.int64)
    val = np.empty(n, dtype=np.float64)
    for r in prange(n):
        best = -np.inf
        k = 0
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += x[r, j] * y[i, j]
            s += h[i]
            if s > best:
                best = s
                k = i
        idx[r] = k
        val[r] = best
    return idx, val


def cell_counts(x, y, h):
    idx, _ = envelope_argmax(x, y, h)
    return np.bincount(idx, minlength=y.shape[0]).astype(np.int64)


@njit(cache=True, parallel=True)
def _argmax_pair(x, y, h_a, h_b):
    n, d = x.shape
    m = y.shape[0]
    ia = np.empty(n, dtype=np.int64)
    ib = np.empty(n, dtype=np.int64)
    for r in prange(n):
        best_a = -np.inf
        best_b = -np.inf
        ka = 0
        kb = 0
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += x[r, j] * y[i, j]
            if s + h_a[i] > best_a:
                best_a = s + h_a[i]
                ka = i
            if s + h_b[i] > best_b:
                best_b = s + h_b[i]
                kb = i
        ia[r] = ka
        ib[r] = kb
    return ia, ib


def cell_counts_pair(x, y, h_a, h_b):
    ia, ib = _argmax_pair(x, y, h_a, h_b)
    m = y.shape[0]
    return np.bincount(ia, minlength=m).astype(np.int64), np.bincount(ib, minlength=m).astype(np.int64)


@njit(cache=True, parallel=True)
def _cross_rows(a, b):
    n, d = a.shape
    m = b.shape[0]
    rows = np.zeros(n)
    for i in prange(n):
        acc = 0.0
        for k in range(m):
            s = 0.0
            for j in range(d):
                t = a[i, j] - b[k, j]
                s += t * t
            acc += np.sqrt(s)
        rows[i] = acc
    return rows


@njit(cache=True, parallel=True)
def _upper_rows(a):
    n, d = a.shape
    rows = np.zeros(n)
    for i in prange(n):
        acc = 0.0
        for k in range(i + 1, n):
            s = 0.0
            for j in range(d):
                t = a[i, j] - a[k, j]
                s += t * t
            acc += np.sqrt(s)
        rows[i] = acc
    return rows


def cross_dist_sum(a, b):
    return float(_cross_rows(a, b).sum())


def within_dist_sum(a):
    """Sum of ``|a_i - a_j|`` over ordered pairs (diagonal contributes zero)."""
    return 2.0 * float(_upper_rows(a).sum())
