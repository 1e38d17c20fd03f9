"""Discrete Brenier potential: upper envelope of hyperplanes ``<x, y_i> + h_i``.

The gradient of the envelope is the semi-discrete transport map: every point
of cell ``W_i`` (where plane ``i`` is on top) is sent to ``y_i``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InputError

MAGIC = b"SDOT"
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Discrete target supports with their probability weights."""

    points: np.ndarray
    measure: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InputError(f"points must be a non-empty (|I|, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("points must be finite")
        nu = np.array(self.measure, dtype=np.float64, copy=True).reshape(-1)
        if nu.shape[0] != pts.shape[0]:
            raise InputError(f"measure has {nu.shape[0]} entries for {pts.shape[0]} points")
        if np.any(~np.isfinite(nu)) or np.any(nu < 0):
            raise InputError("measure entries must be finite and nonnegative")
        if abs(nu.sum() - 1.0) > 1e-12:
            raise InputError(f"measure must sum to 1 (got {nu.sum()!r})")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InputError("duplicate target points")
        pts.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "measure", nu)

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=np.float64)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class BrenierPotential:
    """Height vector over a :class:`TargetSet`.

    ``meta`` carries bindings such as the diffusion schedule digest and the
    number of reverse steps the targets were diffused for; it is persisted
    with the potential but does not affect evaluation.
    """

    targets: TargetSet
    heights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        h = np.array(self.heights, dtype=np.float64, copy=True).reshape(-1)
        if h.shape[0] != self.targets.size:
            raise InputError(f"{h.shape[0]} heights for {self.targets.size} targets")
        if not np.all(np.isfinite(h)):
            raise InputError("heights must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def zeros(cls, targets, meta=None):
        return cls(targets, np.zeros(targets.size), meta or {})

    @property
    def dim(self) -> int:
        return self.targets.dim

    def with_heights(self, heights) -> "BrenierPotential":
        return BrenierPotential(self.targets, heights, self.meta)

    def with_meta(self, **items) -> "BrenierPotential":
        meta = dict(self.meta)
        meta.update(items)
        return BrenierPotential(self.targets, self.heights, meta)

    def gauge_fixed(self) -> "BrenierPotential":
        return self.with_heights(self.heights - self.heights.mean())

    # evaluation -----------------------------------------------------------

    def _as_batch(self, x):
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        batch = arr[None, :] if single else arr
        if batch.ndim != 2 or batch.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}, got shape {arr.shape}")
        return batch, single

    def evaluate(self, x):
        """Return ``(cell_index, potential_value)`` for one point or a batch."""
        batch, single = self._as_batch(x)
        idx, val = kernels.envelope_argmax(batch, self.targets.points, self.heights)
        if single:
            return int(idx[0]), float(val[0])
        return idx, val

    def potential_value(self, x):
        return self.evaluate(x)[1]

    def cell_index(self, x):
        return self.evaluate(x)[0]

    def ot_map(self, x):
        idx = self.cell_index(x)
        return self.targets.points[idx].copy()

    # persistence ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        pts = self.targets.points
        n, d = pts.shape
        meta = json.dumps(self.meta, sort_keys=True, separators=(",", ":")).encode()
        return b"".join([
            MAGIC,
            struct.pack("<IIQ", FORMAT_VERSION, d, n),
            pts.astype("<f8").tobytes(order="C"),
            self.targets.measure.astype("<f8").tobytes(),
            self.heights.astype("<f8").tobytes(),
            # trailing metadata block: u32 length + UTF-8 JSON
            struct.pack("<I", len(meta)),
            meta,
        ])

    @classmethod
    def from_bytes(cls, buf: bytes) -> "BrenierPotential":
        if buf[:4] != MAGIC:
            raise InputError("not an SDOT container")
        version, d, n = struct.unpack_from("<IIQ", buf, 4)
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported SDOT container version {version}")
        off = 4 + 16
        pts = np.frombuffer(buf, "<f8", n * d, off).reshape(n, d)
        off += 8 * n * d
        nu = np.frombuffer(buf, "<f8", n, off)
        off += 8 * n
        h = np.frombuffer(buf, "<f8", n, off)
        off += 8 * n
        meta = {}
        if off < len(buf):
            (length,) = struct.unpack_from("<I", buf, off)
            meta = json.loads(buf[off + 4:off + 4 + length].decode()) if length else {}
        return cls(TargetSet(pts, nu), h, meta)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BrenierPotential":
        return cls.from_bytes(Path(path).read_bytes())

    def to_json(self) -> str:
        """Text mirror of the binary container; floats round-trip via repr."""
        return json.dumps({
            "format": "SDOT",
            "version": FORMAT_VERSION,
            "dim": self.dim,
            "points": self.targets.points.tolist(),
            "measure": self.targets.measure.tolist(),
            "heights": self.heights.tolist(),
            "meta": self.meta,
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BrenierPotential":
        doc = json.loads(text)
        if doc.get("format") != "SDOT":
            raise InputError("not an SDOT JSON document")
        pts = np.asarray(doc["points"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        return cls(TargetSet(pts, doc["measure"]), doc["heights"], doc.get("meta", {}))


def potential_value(p: BrenierPotential, x):
    return p.potential_value(x)


def cell_index(p: BrenierPotential, x, tie_break: str = "lowest"):
    if tie_break != "lowest":
        raise InputError(f"unsupported tie-break rule {tie_break!r}")
    return p.cell_index(x)


def ot_map(p: BrenierPotential, x):
    return p.ot_map(x)
