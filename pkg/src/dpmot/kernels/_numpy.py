"""Pure-numpy reference kernels.

Rows are processed in chunks so the (n, m) score matrix never exceeds
``_CHUNK * m`` doubles.
"""
import numpy as np

_CHUNK = 1 << 15


def envelope_argmax(x, y, h):
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    val = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        xs = x[lo:lo + _CHUNK]
        scores = xs @ y.T
        scores += h
        k = np.argmax(scores, axis=1)  # first maximum -> lowest index on ties
        idx[lo:lo + _CHUNK] = k
        # recompute the winning plane with a plain left-to-right sum
        val[lo:lo + _CHUNK] = _rowdot(xs, y[k]) + h[k]
    return idx, val


def _rowdot(a, b):
    acc = np.zeros(a.shape[0])
    for j in range(a.shape[1]):
        acc += a[:, j] * b[:, j]
    return acc


def cell_counts(x, y, h):
    counts = np.zeros(y.shape[0], dtype=np.int64)
    for lo in range(0, x.shape[0], _CHUNK):
        scores = x[lo:lo + _CHUNK] @ y.T
        scores += h
        counts += np.bincount(np.argmax(scores, axis=1), minlength=y.shape[0])
    return counts


def cell_counts_pair(x, y, h_a, h_b):
    m = y.shape[0]
    ca = np.zeros(m, dtype=np.int64)
    cb = np.zeros(m, dtype=np.int64)
    for lo in range(0, x.shape[0], _CHUNK):
        dots = x[lo:lo + _CHUNK] @ y.T
        ca += np.bincount(np.argmax(dots + h_a, axis=1), minlength=m)
        cb += np.bincount(np.argmax(dots + h_b, axis=1), minlength=m)
    return ca, cb


def _dist_block(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(-1))


def cross_dist_sum(a, b):
    rows = np.empty(a.shape[0])
    step = max(1, (1 << 22) // max(1, b.shape[0] * a.shape[1]))
    for lo in range(0, a.shape[0], step):
        rows[lo:lo + step] = _dist_block(a[lo:lo + step], b).sum(1)
    return float(rows.sum())


def within_dist_sum(a):
    """Sum of ``|a_i - a_j|`` over ordered pairs (diagonal contributes zero)."""
    return cross_dist_sum(a, a)

