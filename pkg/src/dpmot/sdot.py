"""Monte-Carlo fit of the Brenier heights so every cell carries its target mass.

The convex energy ``E(h) = int_0^h sum_i w_i(eta) d eta_i - <h, nu>`` has
gradient ``w(h) - nu``, where ``w_i`` is the Gaussian mass of cell ``i``. Each
iteration estimates ``w`` from fresh standard-normal draws, centres the
gradient and takes an Adam step. When the best stopping statistic has not
improved for ``stall_window`` iterations the sample count doubles and the
learning rate shrinks by 0.8.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from . import rng as rngmod
from .brenier import BrenierPotential, TargetSet
from .errors import InputError, SolverDivergedError

LR_DECAY = 0.8


def standard_normal_source(rng, n, d):
    return rngmod.standard_normal(rng, n, d)


@dataclass
class SolverConfig:
    lr: float = 0.1
    n_samples: Optional[int] = None  # None -> 10 x |I|
    stall_window: int = 50
    tol: float = 8e-4
    max_iters: int = 10000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.5
    adam_eps: float = 1e-8
    max_samples: int = 1 << 20
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.tol <= 0:
            raise InputError("lr and tol must be positive")
        if self.stall_window < 1 or self.max_iters < 1 or self.max_samples < 1:
            raise InputError("stall_window, max_iters and max_samples must be positive")
        if self.n_samples is not None and self.n_samples < 1:
            raise InputError("n_samples must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise InputError("Adam betas must lie in (0, 1)")

    def initial_samples(self, n_targets: int) -> int:
        n = self.n_samples if self.n_samples is not None else 10 * n_targets
        return int(min(n, self.max_samples))

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverTrace:
    iteration: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    max_dev: list = field(default_factory=list)
    n_samples: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    converged: bool = False
    achieved_tol: float = math.inf
    returned_iteration: int = -1

    def record(self, it, energy, max_dev, n, lr):
        self.iteration.append(int(it))
        self.energy.append(float(energy))
        self.max_dev.append(float(max_dev))
        self.n_samples.append(int(n))
        self.lr.append(float(lr))

    def __len__(self):
        return len(self.iteration)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "energy", "max_dev", "n_samples", "lr"])
            for row in zip(self.iteration, self.energy, self.max_dev, self.n_samples, self.lr):
                w.writerow([row[0], repr(row[1]), repr(row[2]), row[3], repr(row[4])])


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.5, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad):
        """Return the parameter decrement for ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def estimate_cell_volumes(p: BrenierPotential, n: int, seed, source: Callable = standard_normal_source,
                          counter: int = 0):
    """Fraction of ``n`` source draws landing in each cell of ``p``."""
    if n < 1:
        raise InputError("need at least one Monte-Carlo sample")
    x = _draw(seed, counter, int(n), p.dim, source)
    return kernels.cell_counts(x, p.targets.points, p.heights) / float(n)


def _draw(seed, counter, n, d, source):
    return source(rngmod.stream(seed, rngmod.SDOT_VOLUMES, counter), n, d)


def gradient(w_hat, nu):
    w_hat = np.asarray(w_hat, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if w_hat.shape != nu.shape:
        raise InputError(f"length mismatch: {w_hat.shape} vs {nu.shape}")
    g = w_hat - nu
    return g - g.mean()


def energy(p: BrenierPotential, path):
    """Trapezoidal path integral of ``w - nu`` along ``(h, w_hat)`` checkpoints.

    The path must start at ``h = 0``; returns the energy at its last point.
    """
    path = list(path)
    if not path:
        raise InputError("empty checkpoint path")
    nu = p.targets.measure
    h0 = np.asarray(path[0][0], dtype=np.float64)
    if np.any(h0 != 0):
        raise InputError("checkpoint path must start at h = 0")
    e = 0.0
    for (h_a, w_a), (h_b, w_b) in zip(path[:-1], path[1:]):
        e += _trapezoid(np.asarray(h_a), np.asarray(w_a), np.asarray(h_b), np.asarray(w_b), nu)
    return e


def _trapezoid(h_a, w_a, h_b, w_b, nu):
    return float(np.dot(0.5 * (w_a + w_b) - nu, h_b - h_a))


def stop_sample_floor(nu, tol) -> int:
    """Smallest N whose per-cell Monte-Carlo standard error is at most ``tol``."""
    worst = float(np.max(nu * (1.0 - nu)))
    return int(math.ceil(worst / tol ** 2))


def fit(targets: TargetSet, config: SolverConfig = None, source: Callable = standard_normal_source,
        meta: Optional[dict] = None):
    """Fit heights for ``targets``. Returns ``(potential, trace)``.

    Stops once ``max_i |w_i - nu_i| < tol`` is observed at a sample count whose
    Monte-Carlo standard error is itself below ``tol``; otherwise runs to
    ``max_iters`` and returns the best heights seen at the final sample count.
    """
    cfg = config or SolverConfig()
    m = targets.size
    nu = targets.measure
    trace = SolverTrace()
    pot = BrenierPotential.zeros(targets, meta)
    if m == 1:
        trace.record(0, 0.0, 0.0, cfg.initial_samples(m), cfg.lr)
        trace.converged = True
        trace.achieved_tol = 0.0
        trace.returned_iteration = 0
        return pot, trace

    n = cfg.initial_samples(m)
    n_floor = min(stop_sample_floor(nu, cfg.tol), cfg.max_samples)
    opt = Adam(m, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    h = np.zeros(m)
    e = 0.0
    prev = None
    best_stat = math.inf
    since_best = 0
    level_best = (math.inf, h.copy(), -1)

    pts = targets.points
    for it in range(cfg.max_iters):
        x = _draw(cfg.seed, it, n, targets.dim, source)
        if prev is None:
            w = kernels.cell_counts(x, pts, h) / float(n)
        else:
            # both trapezoid ends on this fresh draw: the estimate that chose
            # the step would correlate with it and bias the integral
            c_prev, c = kernels.cell_counts_pair(x, pts, prev, h)
            w = c / float(n)
            e += _trapezoid(prev, c_prev / float(n), h, w, nu)
        stat = float(np.max(np.abs(w - nu)))
        trace.record(it, e, stat, n, opt.lr)
        if not (math.isfinite(e) and math.isfinite(stat)):
            raise SolverDivergedError(f"non-finite energy at iteration {it}", trace)

        if stat < level_best[0]:
            level_best = (stat, h.copy(), it)
        if stat < cfg.tol and n >= n_floor:
            trace.converged = True
            trace.achieved_tol = stat
            trace.returned_iteration = it
            return pot.with_heights(h), trace

        g = gradient(w, nu)
        if not np.all(np.isfinite(g)):
            raise SolverDivergedError(f"non-finite gradient at iteration {it}", trace)
        prev = h.copy()
        h = h - opt.step(g)
        h -= h.mean()
        if not np.all(np.isfinite(h)):
            raise SolverDivergedError(f"non-finite heights after iteration {it}", trace)

        if stat < best_stat:
            best_stat = stat
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.stall_window:
                since_best = 0
                if n < cfg.max_samples:
                    n = min(2 * n, cfg.max_samples)
                    level_best = (math.inf, h.copy(), -1)
                opt.lr *= LR_DECAY

    stat, h_best, it_best = level_best
    if it_best < 0:
        h_best, stat = h, trace.max_dev[-1]
    trace.achieved_tol = stat
    trace.returned_iteration = it_best
    return pot.with_heights(h_best), trace
