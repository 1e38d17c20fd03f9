"""Run configuration: a YAML/JSON document with a canonical digest."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .containers import canonical_json
from .diffusion import schedule_from_spec
from .errors import ConfigurationError, InputError
from .scores import GaussianMixture
from .sdot import SolverConfig

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "out": "runs/out",
    "data": {
        "gmm": None,
        "points": None,
        "n": 200,
        "stratified": True,
    },
    "schedule": {"kind": "ve", "T": 100, "sigma_min": 0.01, "sigma_max": 5.0},
    "M": 10,
    "solver": {},
    "sampler": {"n": 10000, "batch_size": 8192, "variant": "general", "stochastic": True},
    "eval": {
        "lambdas": [0.2],
        "n_reference": 10000,
        "n_permutations": 19,
        "plot": True,
    },
    "oracle": {"grid_resolution": 400, "mc_sizes": [1000, 4000, 16000, 64000], "mc_seeds": 30},
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            # free-form blocks (gmm, schedule, solver) accept any keys
            if path in ("", "eval.", "sampler.", "oracle.", "data."):
                raise ConfigurationError(f"unknown config key {path}{key!r}")
        if isinstance(val, dict) and isinstance(base.get(key), dict) and key not in ("schedule", "solver"):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


class RunConfig:
    """Validated view over a config document.

    ``base_dir`` resolves relative data paths; the digest covers the canonical
    serialisation of the merged document, excluding the output directory.
    """

    def __init__(self, doc: dict, base_dir="."):
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a mapping")
        self.doc = _merge(DEFAULTS, doc)
        self.base_dir = Path(base_dir)
        self._validate()

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
        doc = doc or {}
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(doc, path.parent)

    def _validate(self):
        d = self.doc
        data = d["data"]
        if (data["gmm"] is None) == (data["points"] is None):
            raise ConfigurationError("data needs exactly one of 'gmm' or 'points'")
        if data["points"] is not None and not self.points_path.exists():
            raise ConfigurationError(f"data file {self.points_path} does not exist")
        try:
            self.schedule = schedule_from_spec(d["schedule"])
            self.gmm = GaussianMixture.from_spec(data["gmm"]) if data["gmm"] is not None else None
            self.solver = SolverConfig.from_dict(d["solver"])
        except (InputError, TypeError) as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc
        if not 0 < int(d["M"]) < self.schedule.T:
            raise ConfigurationError(f"need 0 < M < T, got M={d['M']}, T={self.schedule.T}")
        if int(data["n"]) < 1 or int(d["sampler"]["n"]) < 1:
            raise ConfigurationError("sample counts must be positive")
        lams = d["eval"]["lambdas"]
        if not lams or any(not 0 < float(v) < 1 for v in lams):
            raise ConfigurationError("eval.lambdas must be a nonempty list in (0, 1)")
        if not 0 <= int(d["seed"]) < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def M(self) -> int:
        return int(self.doc["M"])

    @property
    def out(self) -> Path:
        return Path(self.doc["out"])

    @property
    def points_path(self) -> Path:
        return self.base_dir / self.doc["data"]["points"]

    def section(self, name) -> dict:
        return self.doc[name]

    def canonical(self) -> bytes:
        doc = {k: v for k, v in self.doc.items() if k != "out"}
        return canonical_json(doc)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical()).hexdigest()[:16]
