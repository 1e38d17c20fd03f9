"""Time the numba and numpy kernel implementations on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 3] [--threads N]

Prints one row per (kernel, size) with the best wall time of each backend,
the speedup, and the largest absolute difference between the two results.
"""
import argparse
import time

import numpy as np

from dpmot._backend import set_threads
from dpmot.kernels import _f64, numba_impl, numpy_impl

CASES = [
    ("envelope_argmax", dict(n=1 << 18, m=200, d=2)),
    ("envelope_argmax", dict(n=1 << 16, m=2000, d=8)),
    ("cell_counts", dict(n=1 << 20, m=200, d=2)),
    ("cell_counts_pair", dict(n=1 << 20, m=200, d=2)),
    ("cross_dist_sum", dict(n=4000, m=4000, d=2)),
    ("within_dist_sum", dict(n=10000, m=0, d=2)),
]


def inputs(name, n, m, d, rng):
    if name == "cell_counts_pair":
        return (_f64(rng.standard_normal((n, d)), 2), _f64(rng.standard_normal((m, d)), 2),
                _f64(rng.standard_normal(m) * 0.1, 1), _f64(rng.standard_normal(m) * 0.1, 1))
    if name in ("envelope_argmax", "cell_counts"):
        return (_f64(rng.standard_normal((n, d)), 2), _f64(rng.standard_normal((m, d)), 2),
                _f64(rng.standard_normal(m) * 0.1, 1))
    if name == "cross_dist_sum":
        return _f64(rng.standard_normal((n, d)), 2), _f64(rng.standard_normal((m, d)), 2)
    return (_f64(rng.standard_normal((n, d)), 2),)


def best_time(fn, args, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def discrepancy(a, b):
    if isinstance(a, tuple):
        return max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)))) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    set_threads(args.threads)
    if numba_impl is None:
        raise SystemExit("numba is not importable")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<17} {'size':<22} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max diff':>9}")
    for name, size in CASES:
        data = inputs(name, **size, rng=rng)
        getattr(numba_impl, name)(*(a[:8] for a in data))  # compile outside the timing
        t_np, r_np = best_time(getattr(numpy_impl, name), data, args.repeat)
        t_nb, r_nb = best_time(getattr(numba_impl, name), data, args.repeat)
        label = "x".join(f"{k}={v}" for k, v in size.items() if v)
        print(f"{name:<17} {label:<22} {t_np:9.4f} {t_nb:9.4f} {t_np / t_nb:8.2f} {discrepancy(r_np, r_nb):9.2e}")


if __name__ == "__main__":
    main()
