"""Independent validators for fitted potentials.

Nothing here touches the Monte-Carlo volume estimator: 1D heights come from
Gaussian quantiles and 2D cell masses from tensor-product quadrature of the
standard normal on a regular grid.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .brenier import BrenierPotential, TargetSet
from .errors import InputError


def solve_1d_exact(targets: TargetSet):
    """Heights whose cells split N(0, 1) exactly according to the target weights.

    With increasing supports ``y_1 < ... < y_m`` cell ``i`` is an interval whose
    right end is the normal quantile of ``nu_1 + ... + nu_i``; equal planes at
    each boundary fix consecutive height differences.
    """
    if targets.dim != 1:
        raise InputError("solve_1d_exact needs one-dimensional targets")
    y = targets.points[:, 0]
    if np.any(np.diff(y) <= 0):
        raise InputError("targets must be strictly increasing")
    cum = np.cumsum(targets.measure)[:-1]
    bounds = ndtri(np.clip(cum, 0.0, 1.0))
    h = np.zeros(y.shape[0])
    for i, b in enumerate(bounds):
        h[i + 1] = h[i] + b * (y[i] - y[i + 1])
    return h - h.mean()


def grid_cell_masses(p: BrenierPotential, resolution: int = 1000, extent: float = 6.0):
    """Standard-normal mass of each cell on a ``resolution``^2 grid over ``[-extent, extent]^2``.

    Each grid square carries its exact Gaussian mass and is assigned to the
    cell containing its centre.
    """
    if p.dim != 2:
        raise InputError("grid validation is two-dimensional")
    if resolution < 100:
        raise InputError("resolution must be at least 100 per axis")
    edges = np.linspace(-extent, extent, resolution + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mass_1d = np.diff(ndtr(edges))
    masses = np.zeros(p.targets.size)
    pts = p.targets.points
    for r in range(resolution):
        row = np.column_stack([np.full(resolution, centers[r]), centers])
        idx, _ = kernels.envelope_argmax(row, pts, p.heights)
        masses += np.bincount(idx, weights=mass_1d[r] * mass_1d, minlength=pts.shape[0])
    return masses


def grid_validate_2d(p: BrenierPotential, resolution: int = 1000, extent: float = 6.0) -> float:
    """Max deviation between quadrature cell masses and the target weights."""
    return float(np.max(np.abs(grid_cell_masses(p, resolution, extent) - p.targets.measure)))


def instance_digest(targets: TargetSet) -> str:
    h = hashlib.sha256()
    h.update(targets.points.astype("<f8").tobytes())
    h.update(targets.measure.astype("<f8").tobytes())
    return h.hexdigest()[:16]


def oracle_report(p: BrenierPotential, **extra) -> str:
    """JSON text summarising the exact checks that apply to ``p``."""
    doc = {"instance": instance_digest(p.targets), "dim": p.dim, "size": p.targets.size}
    if p.dim == 1 and np.all(np.diff(p.targets.points[:, 0]) > 0):
        h_star = solve_1d_exact(p.targets)
        doc["heights_exact"] = h_star.tolist()
        doc["height_error"] = height_error(p.heights, h_star)
    if p.dim == 2:
        doc["grid_deviation"] = grid_validate_2d(p)
    doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True)


def height_error(h, h_star) -> float:
    """Gauge-free height discrepancy ``max|h - h*| / (range(h*) + 1)``."""
    h = np.asarray(h) - np.mean(h)
    h_star = np.asarray(h_star) - np.mean(h_star)
    return float(np.max(np.abs(h - h_star)) / (np.ptp(h_star) + 1.0))
