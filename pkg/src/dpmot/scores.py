"""Exact scores for isotropic Gaussian mixtures under the forward diffusion.

A forward run maps ``x_0 ~ sum_k w_k N(mu_k, s_k^2 I)`` to
``x_t ~ sum_k w_k N(m_t mu_k, (m_t^2 s_k^2 + v_t) I)`` where ``m_t`` is the
mean scale and ``v_t`` the accumulated noise variance of the schedule. Both are
computed from the same unit-step recursion the forward sampler uses, so the
oracle is exact for the discretisation rather than its continuous limit.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from .diffusion import VE, DiffusionSchedule
from .errors import InputError


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        s = np.array(self.stds, dtype=np.float64).reshape(-1)
        if s.shape[0] == 1 and w.shape[0] > 1:
            s = np.full(w.shape[0], s[0])
        if not (w.shape[0] == mu.shape[0] == s.shape[0]) or w.shape[0] < 1:
            raise InputError("weights, means and stds must describe the same K >= 1 components")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("mixture weights must be positive and sum to 1")
        if np.any(s <= 0):
            raise InputError("component stds must be positive")
        for a in (w, mu, s):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stds", s)

    @classmethod
    def from_spec(cls, spec: dict) -> "GaussianMixture":
        return cls(spec["weights"], spec["means"], spec["stds"])

    def to_spec(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "stds": self.stds.tolist()}

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _component_params(self, noise_var, scale):
        if noise_var < 0:
            raise InputError("noise variance must be nonnegative")
        return scale * self.means, scale ** 2 * self.stds ** 2 + noise_var

    def _log_terms(self, x, noise_var=0.0, scale=1.0):
        x = _batch(x, self.dim)
        centers, var = self._component_params(noise_var, scale)
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        logn = -0.5 * d2 / var - 0.5 * self.dim * np.log(2 * np.pi * var)
        return x, centers, var, np.log(self.weights) + logn

    def log_density(self, x, noise_var=0.0, scale=1.0):
        single = np.ndim(x) == 1
        _, _, _, terms = self._log_terms(x, noise_var, scale)
        out = logsumexp(terms, axis=1)
        return float(out[0]) if single else out

    def responsibilities(self, x, noise_var=0.0, scale=1.0):
        single = np.ndim(x) == 1
        _, _, _, terms = self._log_terms(x, noise_var, scale)
        r = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        return r[0] if single else r

    def sample(self, n, rng, stratified=False):
        """Draw ``n`` points; ``stratified`` fixes per-component counts to ``round(n w_k)``."""
        if stratified:
            counts = np.floor(n * self.weights).astype(int)
            # hand leftover draws to the largest fractional parts
            rem = n - counts.sum()
            order = np.argsort(-(n * self.weights - counts), kind="stable")
            counts[order[:rem]] += 1
            labels = np.repeat(np.arange(self.K), counts)
        else:
            labels = rng.choice(self.K, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[labels] + self.stds[labels, None] * z, labels


def _batch(x, d):
    x = np.asarray(x, dtype=np.float64)
    b = x[None, :] if x.ndim == 1 else x
    if b.ndim != 2 or b.shape[1] != d:
        raise InputError(f"expected points of dimension {d}, got shape {x.shape}")
    if not np.all(np.isfinite(b)):
        raise InputError("score evaluated at a non-finite point")
    return b


def gmm_score(gm: GaussianMixture, x, noise_var: float, scale: float = 1.0):
    """``grad_x log q(x)`` for the mixture convolved with ``N(0, noise_var I)``.

    ``scale`` multiplies the data before the noise is added (VP mean decay).
    """
    single = np.ndim(x) == 1
    xb, centers, var, terms = gm._log_terms(x, noise_var, scale)
    r = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
    out = ((r / var)[:, :, None] * (centers[None, :, :] - xb[:, None, :])).sum(1)
    return out[0] if single else out


def _check_t(sched, t):
    if not 0 <= t <= sched.T:
        raise InputError(f"step {t} outside [0, {sched.T}]")


def mean_scale_at(sched: DiffusionSchedule, t: int) -> float:
    """Product of per-step mean factors up to ``t`` (1 for VE)."""
    _check_t(sched, t)
    if sched.kind == VE:
        return 1.0
    return float(np.prod(1.0 - 0.5 * sched.betas[1:t + 1]))


def noise_var_at(sched: DiffusionSchedule, t: int) -> float:
    """Variance of ``x_t - m_t x_0`` after ``t`` forward steps."""
    _check_t(sched, t)
    if sched.kind == VE:
        return float(np.sum(sched.sigmas[1:t + 1] ** 2))
    v = 0.0
    for u in range(1, t + 1):
        v = (1.0 - 0.5 * sched.betas[u]) ** 2 * v + sched.betas[u]
    return float(v)


class ScoreProvider(Protocol):
    """Anything mapping an (n, d) batch at step ``t`` to an (n, d) score batch."""

    dim: int

    def __call__(self, x, t: int) -> np.ndarray: ...


class GMMScore:
    """Exact marginal score of a mixture under a schedule."""

    def __init__(self, gm: GaussianMixture, sched: DiffusionSchedule):
        self.gm = gm
        self.sched = sched
        self.dim = gm.dim
        self._var = np.array([noise_var_at(sched, t) for t in range(sched.T + 1)])
        self._scale = np.array([mean_scale_at(sched, t) for t in range(sched.T + 1)])

    def __call__(self, x, t):
        _check_t(self.sched, t)
        return gmm_score(self.gm, x, self._var[t], self._scale[t])

    def describe(self):
        return {"kind": "gmm", "mixture": self.gm.to_spec(), "schedule": self.sched.describe()}

    def log_density(self, x, t):
        _check_t(self.sched, t)
        return self.gm.log_density(x, self._var[t], self._scale[t])


class ZeroScore:
    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, x, t):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def describe(self):
        return {"kind": "zero", "dim": self.dim}


TABLE_MAGIC = b"TSCR"
TABLE_VERSION = 1


class TabulatedScore:
    """Score read off a regular grid by multilinear interpolation.

    File layout (little-endian): ``b"TSCR"``, version u32, d u32, n_times u32,
    step indices (n_times x u32), per-axis lower and upper bounds (d x f64
    each), per-axis resolution (d x u32), then float64 values laid out as
    ``(n_times, r_1, ..., r_d, d)`` in C order. Queries outside the grid are
    clamped to the boundary. A step not in the table uses the nearest listed one.
    """

    def __init__(self, times, lo, hi, values):
        self.times = np.asarray(times, dtype=np.int64)
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.dim = self.lo.shape[0]
        self.shape = self.values.shape[1:-1]
        if self.values.shape != (self.times.shape[0], *self.shape, self.dim) or len(self.shape) != self.dim:
            raise InputError("table values do not match the declared grid")
        if min(self.shape) < 2 or np.any(self.hi <= self.lo):
            raise InputError("each grid axis needs at least two nodes and hi > lo")

    @classmethod
    def tabulate(cls, provider, times, lo, hi, resolution):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), lo.shape)
        axes = [np.linspace(lo[j], hi[j], res[j]) for j in range(lo.shape[0])]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.shape[0])
        values = np.stack([provider(grid, t).reshape(*res, lo.shape[0]) for t in times])
        return cls(times, lo, hi, values)

    def _slice(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        return self.values[k]

    def __call__(self, x, t):
        single = np.ndim(x) == 1
        xb = _batch(x, self.dim)
        table = self._slice(t)
        res = np.asarray(self.shape)
        pos = (xb - self.lo) / (self.hi - self.lo) * (res - 1)
        pos = np.clip(pos, 0.0, res - 1)
        base = np.minimum(np.floor(pos).astype(np.int64), res - 2)
        frac = pos - base
        out = np.zeros_like(xb)
        for corner in range(1 << self.dim):
            bits = [(corner >> j) & 1 for j in range(self.dim)]
            w = np.ones(xb.shape[0])
            idx = []
            for j, b in enumerate(bits):
                w = w * (frac[:, j] if b else 1.0 - frac[:, j])
                idx.append(base[:, j] + b)
            out += w[:, None] * table[tuple(idx)]
        return out[0] if single else out

    def describe(self):
        return {"kind": "table", "sha256": hashlib.sha256(self.to_bytes()).hexdigest()[:16]}

    def to_bytes(self) -> bytes:
        d = self.dim
        return b"".join([
            TABLE_MAGIC,
            struct.pack("<III", TABLE_VERSION, d, self.times.shape[0]),
            self.times.astype("<u4").tobytes(),
            self.lo.astype("<f8").tobytes(),
            self.hi.astype("<f8").tobytes(),
            np.asarray(self.shape, dtype="<u4").tobytes(),
            self.values.astype("<f8").tobytes(order="C"),
        ])

    @classmethod
    def from_bytes(cls, buf: bytes) -> "TabulatedScore":
        if buf[:4] != TABLE_MAGIC:
            raise InputError("not a tabulated-score file")
        version, d, nt = struct.unpack_from("<III", buf, 4)
        if version != TABLE_VERSION:
            raise InputError(f"unsupported tabulated-score version {version}")
        off = 16
        times = np.frombuffer(buf, "<u4", nt, off).astype(np.int64)
        off += 4 * nt
        lo = np.frombuffer(buf, "<f8", d, off)
        off += 8 * d
        hi = np.frombuffer(buf, "<f8", d, off)
        off += 8 * d
        res = np.frombuffer(buf, "<u4", d, off).astype(np.int64)
        off += 4 * d
        count = nt * int(np.prod(res)) * d
        values = np.frombuffer(buf, "<f8", count, off).reshape(nt, *res, d)
        return cls(times, lo, hi, values)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TabulatedScore":
        return cls.from_bytes(Path(path).read_bytes())


def finite_difference_check(score_fn, log_density_fn, points, step=1e-4):
    """Max relative error of ``score_fn`` against central differences of ``log_density_fn``.

    The error at each probe is ``|s - fd| / max(|fd|, 1e-12)`` in the Euclidean norm.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = pts.shape
    fd = np.empty_like(pts)
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        fd[:, j] = (log_density_fn(pts + e) - log_density_fn(pts - e)) / (2 * step)
    s = np.atleast_2d(score_fn(pts))
    err = np.linalg.norm(s - fd, axis=1) / np.maximum(np.linalg.norm(fd, axis=1), 1e-12)
    return float(err.max())
