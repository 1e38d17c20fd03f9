"""Mode-mixture indicator and ratio, plus two-sample distances."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from . import rng as rngmod
from .errors import InputError
from .scores import GaussianMixture

MAX_ASSIGNMENT = 512


class BayesClassifier:
    """Posterior class probabilities of a Gaussian mixture at zero noise."""

    def __init__(self, gm: GaussianMixture):
        self.gm = gm
        self.n_classes = gm.K

    def __call__(self, x):
        return np.atleast_2d(self.gm.responsibilities(np.atleast_2d(x)))


def _check_probs(probs):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim not in (1, 2) or p.shape[-1] < 1:
        raise InputError("probabilities must be a vector or a batch of vectors")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(np.abs(p.sum(-1) - 1.0) > 1e-9):
        raise InputError("not a probability vector")
    return p


def mode_mixture_indicator(probs, lam: float) -> int:
    """1 when at least two class probabilities reach ``lam`` (inclusive), else 0."""
    if not 0 < lam < 1:
        raise InputError("threshold must lie in (0, 1)")
    p = _check_probs(probs)
    if p.ndim != 1:
        raise InputError("expected a single probability vector")
    return int(np.count_nonzero(p >= lam) >= 2)


def mixture_flags(probs, lam: float):
    if not 0 < lam < 1:
        raise InputError("threshold must lie in (0, 1)")
    p = np.atleast_2d(_check_probs(probs))
    return (np.count_nonzero(p >= lam, axis=1) >= 2).astype(np.int8)


@dataclass
class MmrReport:
    K: int
    lam: float
    flags: np.ndarray
    mmr: float

    @classmethod
    def from_flags(cls, flags, lam):
        flags = np.asarray(flags, dtype=np.int8)
        if flags.size == 0:
            raise InputError("empty batch")
        return cls(int(flags.size), float(lam), flags, int(flags.sum()) / flags.size)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def to_json(self, include_flags=False) -> str:
        doc = {"K": self.K, "lambda": self.lam, "mixed": self.count, "mmr": self.mmr}
        if include_flags:
            doc["flags"] = self.flags.tolist()
        return json.dumps(doc, sort_keys=True)


def mmr(batch, clf, lam: float) -> MmrReport:
    """Fraction of samples the indicator flags as mode-mixed."""
    x = getattr(batch, "samples", batch)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise InputError("empty batch")
    return MmrReport.from_flags(mixture_flags(clf(x), lam), lam)


def _as_points(a):
    x = getattr(a, "samples", a)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("expected a non-empty (n, d) sample")
    return x


def _energy_from_sums(ab, aa, bb, n, m):
    return 2.0 * ab / (n * m) - aa / (n * n) - bb / (m * m)


def energy_distance(a, b) -> float:
    """V-statistic ``2 E|A - B| - E|A - A'| - E|B - B'|`` over all pairs."""
    x, y = _as_points(a), _as_points(b)
    if x.shape[1] != y.shape[1]:
        raise InputError("samples differ in dimension")
    return _energy_from_sums(kernels.cross_dist_sum(x, y), kernels.within_dist_sum(x),
                             kernels.within_dist_sum(y), x.shape[0], y.shape[0])


def energy_permutation_null(a, b, n_permutations: int = 19, seed: int = 0):
    """Energy distances of random relabellings of the pooled sample.

    Uses the fixed total ``S = sum_{i != j} |z_i - z_j|`` of the pool so each
    permutation only needs the two within-group sums.
    """
    x, y = _as_points(a), _as_points(b)
    if x.shape[1] != y.shape[1]:
        raise InputError("samples differ in dimension")
    pooled = np.vstack([x, y])
    n, m = x.shape[0], y.shape[0]
    total = kernels.within_dist_sum(pooled)
    rng = rngmod.stream(seed, rngmod.PERMUTATION)
    out = np.empty(n_permutations)
    for k in range(n_permutations):
        perm = rng.permutation(n + m)
        px, py = pooled[perm[:n]], pooled[perm[n:]]
        aa = kernels.within_dist_sum(px)
        bb = kernels.within_dist_sum(py)
        out[k] = _energy_from_sums(0.5 * (total - aa - bb), aa, bb, n, m)
    return out


def permutation_threshold(null, level: float = 0.95) -> float:
    """Critical value for a permutation test at ``1 - level``.

    Rank convention: with ``B`` relabellings the statistic is rejected when it
    exceeds the ``ceil(level (B + 1))``-th smallest null value, which makes the
    test exact at level ``1 - level`` when ``level (B + 1)`` is an integer.
    """
    null = np.sort(np.asarray(null))
    k = math.ceil(level * (null.shape[0] + 1))
    return float(null[min(k, null.shape[0]) - 1])


def assignment_w2(a, b) -> float:
    """Exact W2 between two equal-size point clouds via optimal assignment."""
    x, y = _as_points(a), _as_points(b)
    if x.shape != y.shape:
        raise InputError("assignment_w2 needs equal-size samples of one dimension")
    if x.shape[0] > MAX_ASSIGNMENT:
        raise InputError(f"at most {MAX_ASSIGNMENT} points per side")
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(float(cost[rows, cols].mean()))
