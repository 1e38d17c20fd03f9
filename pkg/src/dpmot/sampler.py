"""DPM-OT sampling: one transport jump from white noise to the level-``M``
latents, followed by ``M`` reverse diffusion steps.

Noise draws are keyed by (seed, step) so two runs with the same seed see the
same ``z`` at every step; the perturbation probe relies on this coupling.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .brenier import BrenierPotential
from .containers import canonical_json, read_array, write_array
from .diffusion import DiffusionSchedule, reverse_step
from .errors import ConfigurationError, InputError, NumericError
from .scores import noise_var_at


def bind_schedule(p: BrenierPotential, sched: DiffusionSchedule, M: int, **extra) -> BrenierPotential:
    """Record which schedule and level ``M`` the potential's targets were diffused to."""
    return p.with_meta(schedule_digest=sched.digest(), M=int(M), **extra)


def potential_digest(p: BrenierPotential) -> str:
    return hashlib.sha256(p.to_bytes()).hexdigest()[:16]


def _describe(provider):
    fn = getattr(provider, "describe", None)
    return fn() if callable(fn) else type(provider).__name__


class _Counted:
    """Counts score evaluations per input row."""

    def __init__(self, provider):
        self.provider = provider
        self.evaluations = 0

    def __call__(self, x, t):
        self.evaluations += x.shape[0]
        out = np.asarray(self.provider(x, t), dtype=np.float64)
        if out.shape != x.shape:
            raise InputError(f"score provider returned shape {out.shape} for input {x.shape}")
        return out


@dataclass
class SamplerConfig:
    M: int
    schedule: DiffusionSchedule
    score: object
    potential: BrenierPotential
    batch_size: int = 8192
    seed: int = 0
    variant: str = "general"
    stochastic: bool = True

    def __post_init__(self):
        if not 0 < self.M < self.schedule.T:
            raise InputError(f"need 0 < M < T, got M={self.M}, T={self.schedule.T}")
        if self.batch_size < 1:
            raise InputError("batch_size must be positive")
        if self.variant not in ("general", "langevin"):
            raise InputError(f"unknown variant {self.variant!r}")

    def check_binding(self):
        meta = self.potential.meta
        if "M" not in meta or "schedule_digest" not in meta:
            raise ConfigurationError("potential carries no schedule/M binding")
        if int(meta["M"]) != self.M:
            raise ConfigurationError(f"potential was fitted for M={meta['M']}, sampler uses M={self.M}")
        if meta["schedule_digest"] != self.schedule.digest():
            raise ConfigurationError("potential was fitted under a different schedule")

    def digest(self) -> str:
        doc = {
            "M": self.M,
            "schedule": self.schedule.describe(),
            "score": _describe(self.score),
            "potential": potential_digest(self.potential),
            "variant": self.variant,
            "stochastic": self.stochastic,
        }
        return hashlib.sha256(canonical_json(doc)).hexdigest()[:16]


@dataclass
class SampleBatch:
    samples: np.ndarray
    seed: int
    config_digest: str
    nfe: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise InputError("samples must be an (n, d) array")
        if not np.all(np.isfinite(self.samples)):
            raise NumericError("sample batch contains non-finite values")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def header(self) -> dict:
        return {"seed": int(self.seed), "config_digest": self.config_digest, "nfe": self.nfe,
                "label": self.label, **self.meta}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.header, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(self.samples.shape[1])])
            for row in self.samples:
                w.writerow([repr(float(v)) for v in row])

    def save(self, path):
        write_array(path, self.samples, self.header)

    @classmethod
    def load(cls, path) -> "SampleBatch":
        arr, meta = read_array(path)
        meta = dict(meta)
        return cls(arr, meta.pop("seed"), meta.pop("config_digest"), meta.pop("nfe"),
                   meta.pop("label", ""), meta)


def _reverse_tail(x, t_start, sched, score, seed, variant, stochastic, keep=False):
    states = [x] if keep else None
    for t in range(t_start, 0, -1):
        s = score(x, t)
        z = None
        if stochastic and t > 1:
            z = rngmod.stream(seed, rngmod.SAMPLER_TAIL, t).standard_normal(x.shape)
        x_prev, x = x, reverse_step(x, t, sched, s, z, variant)
        if keep:
            states.append(x)
        if not np.all(np.isfinite(x)):
            # without a kept trajectory, dump the states around the failing step
            dump = states if keep else [x_prev, x]
            raise NumericError(f"non-finite state after reverse step {t}", trajectory=dump)
    return x, states


def _jump(cfg: SamplerConfig, n: int, seed: int):
    d = cfg.potential.dim
    x_T = rngmod.standard_normal(rngmod.stream(seed, rngmod.SAMPLER_SOURCE), n, d)
    x_M = np.empty_like(x_T)
    for lo in range(0, n, cfg.batch_size):
        x_M[lo:lo + cfg.batch_size] = cfg.potential.ot_map(x_T[lo:lo + cfg.batch_size])
    return x_M


def dpm_ot_sample(cfg: SamplerConfig, n: int, seed: Optional[int] = None) -> SampleBatch:
    """``n`` samples: ``x_M = g(x_T)``, then reverse steps ``t = M, ..., 1``."""
    if n < 1:
        raise InputError("n must be positive")
    cfg.check_binding()
    seed = cfg.seed if seed is None else seed
    score = _Counted(cfg.score)
    x_M = _jump(cfg, n, seed)
    x_0, _ = _reverse_tail(x_M, cfg.M, cfg.schedule, score, seed, cfg.variant, cfg.stochastic)
    return SampleBatch(x_0, seed, cfg.digest(), score.evaluations / n, label="dpm_ot")


def vanilla_sample(schedule: DiffusionSchedule, score, n: int, T_start: int, seed: int,
                   variant: str = "general", stochastic: bool = True) -> SampleBatch:
    """Plain reverse diffusion from ``x_{T_start} ~ N(0, v I)``, ``v`` the accumulated noise variance."""
    if not 1 <= T_start <= schedule.T:
        raise InputError(f"T_start={T_start} outside [1, {schedule.T}]")
    if n < 1:
        raise InputError("n must be positive")
    d = score.dim
    v = noise_var_at(schedule, T_start)
    x = np.sqrt(v) * rngmod.standard_normal(rngmod.stream(seed, rngmod.VANILLA_INIT, T_start), n, d)
    counted = _Counted(score)
    x_0, _ = _reverse_tail(x, T_start, schedule, counted, seed, variant, stochastic)
    doc = {"schedule": schedule.describe(), "score": _describe(score), "T_start": T_start,
           "variant": variant, "stochastic": stochastic}
    digest = hashlib.sha256(canonical_json(doc)).hexdigest()[:16]
    return SampleBatch(x_0, seed, digest, counted.evaluations / n, label=f"vanilla_T{T_start}")


def perturbation_probe(cfg: SamplerConfig, zeta, n: int, seed: Optional[int] = None) -> float:
    """Worst-case growth ``max_t |x~_t - x_t| / |zeta|`` of a shift ``zeta`` applied at level ``M``.

    Both tails use identical noise draws, so the ratio isolates how the
    reverse map propagates the perturbation.
    """
    zeta = np.asarray(zeta, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(zeta))
    if norm <= 0:
        raise InputError("perturbation must be nonzero")
    cfg.check_binding()
    seed = cfg.seed if seed is None else seed
    x_M = _jump(cfg, n, seed)
    if zeta.shape[0] != x_M.shape[1]:
        raise InputError("perturbation dimension does not match the potential")
    args = (cfg.M, cfg.schedule, cfg.score, seed, cfg.variant, cfg.stochastic)
    _, ref = _reverse_tail(x_M, *args, keep=True)
    _, pert = _reverse_tail(x_M + zeta, *args, keep=True)
    return max(float(np.max(np.linalg.norm(a - b, axis=1))) / norm for a, b in zip(ref, pert))
