"""Discrete forward/reverse diffusion with unit time steps.

State ``x_t`` for ``t = 0..T``; ``x_0`` is data. Coefficient index ``t``
labels the transition between ``x_{t-1}`` and ``x_t``:

    forward   x_t     = x_{t-1} + b(x_{t-1}, t) + sigma_t z
    reverse   x_{t-1} = x_t - [b(x_t, t) - sigma_t^2 s(x_t, t)] + sigma_t z

VE: ``b = 0`` and ``sigma_t`` geometric in ``t``. VP: ``b(x, t) = -beta_t x / 2``
and ``sigma_t = sqrt(beta_t)`` with ``beta_t`` linear in ``t``.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import InputError

VE = "ve"
VP = "vp"


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    kind: str
    T: int
    params: dict
    sigmas: np.ndarray = field(repr=False)
    betas: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.T < 2:
            raise InputError("a schedule needs T >= 2")
        s = self.sigmas
        if s.shape != (self.T + 1,) or not np.all(s[1:] > 0):
            raise InputError("sigma_t must be positive for t >= 1")
        if self.kind == VE:
            if not np.all(np.diff(s[1:]) > 0):
                raise InputError("VE noise levels must be strictly increasing")
        elif self.kind == VP:
            b = self.betas
            if b is None or not (np.all(b[1:] > 0) and np.all(b[1:] < 1)):
                raise InputError("VP betas must lie in (0, 1)")
            if not np.all(np.diff(b[1:]) > 0):
                raise InputError("VP betas must be strictly increasing")
        else:
            raise InputError(f"unknown schedule kind {self.kind!r}")

    def sigma(self, t: int) -> float:
        return float(self.sigmas[t])

    def drift(self, x, t: int):
        if self.kind == VE:
            return np.zeros_like(x)
        return -0.5 * self.betas[t] * x

    def describe(self) -> dict:
        return {"kind": self.kind, "T": self.T, **self.params}

    def digest(self) -> str:
        text = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def ve_schedule(T: int = 100, sigma_min: float = 0.01, sigma_max: float = 5.0) -> DiffusionSchedule:
    if not 0 < sigma_min < sigma_max:
        raise InputError("need 0 < sigma_min < sigma_max")
    sig = np.zeros(T + 1)
    sig[1:] = np.geomspace(sigma_min, sigma_max, T)
    return DiffusionSchedule(VE, int(T), {"sigma_min": float(sigma_min), "sigma_max": float(sigma_max)}, sig)


def vp_schedule(T: int = 100, beta_min: float = 1e-4, beta_max: float = 0.02) -> DiffusionSchedule:
    if not 0 < beta_min < beta_max < 1:
        raise InputError("need 0 < beta_min < beta_max < 1")
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_min, beta_max, T)
    return DiffusionSchedule(VP, int(T), {"beta_min": float(beta_min), "beta_max": float(beta_max)},
                             np.sqrt(beta), beta)


def schedule_from_spec(spec: dict) -> DiffusionSchedule:
    spec = dict(spec)
    kind = spec.pop("kind", VE).lower()
    if kind == VE:
        return ve_schedule(**spec)
    if kind == VP:
        return vp_schedule(**spec)
    raise InputError(f"unknown schedule kind {kind!r}")


def _check_shapes(x, z):
    if z is not None and np.shape(z) != np.shape(x):
        raise InputError(f"noise shape {np.shape(z)} does not match state shape {np.shape(x)}")


def forward_step(x_t, t: int, sched: DiffusionSchedule, z):
    """One forward step from state ``t`` to ``t + 1`` (``0 <= t < T``)."""
    if not 0 <= t < sched.T:
        raise InputError(f"forward step index {t} outside [0, {sched.T})")
    x = np.asarray(x_t, dtype=np.float64)
    _check_shapes(x, z)
    u = t + 1
    return x + sched.drift(x, u) + sched.sigma(u) * np.asarray(z, dtype=np.float64)


def diffuse_to(x_0, M: int, sched: DiffusionSchedule, seed: int):
    """Run ``M`` forward steps from ``x_0`` (a point or an (n, d) batch)."""
    if not 1 <= M <= sched.T:
        raise InputError(f"M={M} outside [1, {sched.T}]")
    x = np.array(x_0, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    for t in range(M):
        z = rngmod.stream(seed, rngmod.FORWARD, t).standard_normal(batch.shape)
        batch = forward_step(batch, t, sched, z)
    return batch[0] if single else batch


def reverse_step(x_t, t: int, sched: DiffusionSchedule, score, z=None, variant: str = "general"):
    """One reverse step from state ``t`` to ``t - 1`` (``1 <= t <= T``).

    ``variant="langevin"`` drops the drift term; it coincides with the general
    form whenever the drift is identically zero. ``z=None`` means no noise.
    """
    if not 1 <= t <= sched.T:
        raise InputError(f"reverse step index {t} outside [1, {sched.T}]")
    x = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if score.shape != x.shape:
        raise InputError(f"score shape {score.shape} does not match state shape {x.shape}")
    _check_shapes(x, z)
    s2 = sched.sigma(t) ** 2
    if variant == "general":
        out = x - (sched.drift(x, t) - s2 * score)
    elif variant == "langevin":
        out = x + s2 * score
    else:
        raise InputError(f"unknown reverse variant {variant!r}")
    if z is not None:
        out = out + sched.sigma(t) * np.asarray(z, dtype=np.float64)
    return out


@dataclass
class Trajectory:
    """Ordered (t, state) pairs for one sample."""

    steps: list = field(default_factory=list)

    def append(self, t: int, state):
        state = np.array(state, dtype=np.float64).reshape(-1)
        if self.steps:
            t_prev, s_prev = self.steps[-1]
            if state.shape != s_prev.shape:
                raise InputError("trajectory states must share one dimension")
            if len(self.steps) > 1:
                direction = np.sign(self.steps[-1][0] - self.steps[-2][0])
                if np.sign(t - t_prev) != direction:
                    raise InputError("trajectory times must be strictly monotone")
            elif t == t_prev:
                raise InputError("trajectory times must be strictly monotone")
        self.steps.append((int(t), state))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.steps[0][1].shape[0] if self.steps else 0
            w.writerow(["t"] + [f"x{j}" for j in range(d)])
            for t, s in self.steps:
                w.writerow([t] + [repr(float(v)) for v in s])
