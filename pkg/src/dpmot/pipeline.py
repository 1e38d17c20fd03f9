"""End-to-end stages: latents, fit, sample, eval and the oracle check.

Every stage reads and writes files in the run directory and checks the digest
of whatever it consumes against the producing stage, so a stale artifact
aborts the run instead of silently mixing configurations.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .brenier import BrenierPotential, TargetSet
from .config import RunConfig
from .containers import canonical_json, read_array, write_array
from .diffusion import diffuse_to
from .errors import ConfigurationError, InputError
from .metrics import (BayesClassifier, energy_distance, energy_permutation_null, mmr,
                      permutation_threshold)
from .oracle import grid_validate_2d, height_error, instance_digest, solve_1d_exact
from .sampler import SampleBatch, SamplerConfig, bind_schedule, dpm_ot_sample, potential_digest, vanilla_sample
from .scores import GMMScore, TabulatedScore
from .sdot import SolverConfig, estimate_cell_volumes, fit

log = logging.getLogger(__name__)

LATENTS = "latents.dpmb"
POTENTIAL = "potential.sdot"
TRACE = "trace.csv"
BATCHES = ("dpm_ot", "vanilla_full", "vanilla_trunc")


def stage_seed(master: int, stage: str) -> int:
    """Independent 64-bit sub-seed for a named stage."""
    h = hashlib.sha256(canonical_json([int(master), stage])).digest()
    return int.from_bytes(h[:8], "little")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj)).hexdigest()[:16]


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _savefig(fig, path):
    # no timestamps or version strings, so reruns are byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# ---------------------------------------------------------------------------
# latents

@dataclass
class LatentStore:
    latents: np.ndarray
    schedule_digest: str
    M: int
    data_digest: str
    config_digest: str

    def __post_init__(self):
        self.latents = np.asarray(self.latents, dtype=np.float64)
        if self.latents.ndim != 2 or self.latents.shape[0] == 0:
            raise InputError("latent store needs a non-empty (|I|, d) array")

    @property
    def meta(self) -> dict:
        return {"schedule_digest": self.schedule_digest, "M": self.M,
                "data_digest": self.data_digest, "config_digest": self.config_digest}

    def save(self, path):
        write_array(path, self.latents, self.meta)

    @classmethod
    def load(cls, path) -> "LatentStore":
        arr, meta = read_array(path)
        return cls(arr, meta["schedule_digest"], int(meta["M"]), meta["data_digest"], meta["config_digest"])


def _latent_key(cfg: RunConfig) -> str:
    """Digest of exactly the settings that determine the latents."""
    return _digest({"data": cfg.section("data"), "schedule": cfg.schedule.describe(),
                    "M": cfg.M, "seed": cfg.seed})


def load_data(cfg: RunConfig) -> np.ndarray:
    data = cfg.section("data")
    if cfg.gmm is not None:
        pts, _ = cfg.gmm.sample(int(data["n"]), rngmod.stream(stage_seed(cfg.seed, "data"), rngmod.DATA),
                                stratified=bool(data["stratified"]))
        return pts
    path = cfg.points_path
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty files are reported below
        pts = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=",", ndmin=2)
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise InputError(f"{path}: empty dataset")
    return pts


def make_latents(cfg: RunConfig, out: Path, force: bool = False) -> LatentStore:
    out.mkdir(parents=True, exist_ok=True)
    path = out / LATENTS
    key = _latent_key(cfg)
    if path.exists() and not force:
        old = LatentStore.load(path)
        if old.config_digest != key:
            raise ConfigurationError(f"{path} was produced by a different configuration; refusing to overwrite")
    data = load_data(cfg)
    latents = diffuse_to(data, cfg.M, cfg.schedule, seed=stage_seed(cfg.seed, "forward"))
    store = LatentStore(latents, cfg.schedule.digest(), cfg.M, _digest(data.tolist()), key)
    store.save(path)
    log.info("wrote %d latents to %s", latents.shape[0], path)
    return store


def _load_latents(cfg: RunConfig, out: Path) -> LatentStore:
    path = out / LATENTS
    if not path.exists():
        raise InputError(f"missing {path}; run make-latents first")
    store = LatentStore.load(path)
    if store.config_digest != _latent_key(cfg):
        raise ConfigurationError(f"{path} does not match the configuration")
    return store


# ---------------------------------------------------------------------------
# fit

def run_fit(cfg: RunConfig, out: Path):
    store = _load_latents(cfg, out)
    solver = SolverConfig.from_dict({**cfg.solver.to_dict(), "seed": stage_seed(cfg.seed, "fit")})
    targets = TargetSet.uniform(store.latents)
    meta = {"latents_digest": file_digest(out / LATENTS)}
    pot, trace = fit(targets, solver, meta=meta)
    pot = bind_schedule(pot, cfg.schedule, cfg.M)
    pot.save(out / POTENTIAL)
    trace.to_csv(out / TRACE)
    _write_json(out / "fit.json", {
        "converged": trace.converged, "achieved_tol": trace.achieved_tol,
        "iterations": len(trace), "returned_iteration": trace.returned_iteration,
        "final_n_samples": trace.n_samples[-1], "potential_digest": potential_digest(pot),
    })
    _plot_trace(trace, out / "trace.png")
    log.info("fit: %d iterations, achieved tolerance %.3g", len(trace), trace.achieved_tol)
    return pot, trace


def _plot_trace(trace, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(trace.iteration, trace.max_dev, lw=0.8, label="max |w - nu|")
    ax.set_xlabel("iteration")
    ax.set_ylabel("deviation")
    ax2 = ax.twinx()
    ax2.semilogy(trace.iteration, trace.n_samples, color="tab:orange", lw=0.8, label="N")
    ax2.set_ylabel("Monte-Carlo samples")
    fig.tight_layout()
    _savefig(fig, path)
    plt.close(fig)


def _load_potential(cfg: RunConfig, out: Path) -> BrenierPotential:
    path = out / POTENTIAL
    if not path.exists():
        raise InputError(f"missing {path}; run fit first")
    pot = BrenierPotential.load(path)
    latents = out / LATENTS
    if not latents.exists() or pot.meta.get("latents_digest") != file_digest(latents):
        raise ConfigurationError(f"{path} was not fitted on the current latents")
    return pot


# ---------------------------------------------------------------------------
# sample

def score_provider(cfg: RunConfig):
    spec = cfg.section("data")
    if cfg.gmm is not None:
        return GMMScore(cfg.gmm, cfg.schedule)
    table = spec.get("score_table")
    if table is None:
        raise ConfigurationError("point-cloud data needs data.score_table")
    return TabulatedScore.load(cfg.base_dir / table)


def run_sample(cfg: RunConfig, out: Path):
    pot = _load_potential(cfg, out)
    sp = cfg.section("sampler")
    score = score_provider(cfg)
    seed = stage_seed(cfg.seed, "sample")
    scfg = SamplerConfig(cfg.M, cfg.schedule, score, pot, batch_size=int(sp["batch_size"]), seed=seed,
                         variant=sp["variant"], stochastic=bool(sp["stochastic"]))
    n = int(sp["n"])
    provenance = {"potential_digest": potential_digest(pot), "run_digest": cfg.digest()}
    batches = {
        "dpm_ot": dpm_ot_sample(scfg, n),
        "vanilla_full": vanilla_sample(cfg.schedule, score, n, cfg.schedule.T, seed, sp["variant"],
                                       bool(sp["stochastic"])),
        "vanilla_trunc": vanilla_sample(cfg.schedule, score, n, cfg.M, seed, sp["variant"],
                                        bool(sp["stochastic"])),
    }
    for name, b in batches.items():
        b.meta.update(provenance)
        b.save(out / f"{name}.dpmb")
        b.to_csv(out / f"{name}.csv")
    log.info("sampled %d points per sampler", n)
    return batches


def _load_batches(cfg: RunConfig, out: Path):
    pot_digest = potential_digest(_load_potential(cfg, out))
    batches = {}
    for name in BATCHES:
        path = out / f"{name}.dpmb"
        if not path.exists():
            raise InputError(f"missing batch {path}; run sample first")
        b = SampleBatch.load(path)
        if b.meta.get("potential_digest") != pot_digest or b.meta.get("run_digest") != cfg.digest():
            raise ConfigurationError(f"{path} does not match the current potential/configuration")
        batches[name] = b
    return batches


# ---------------------------------------------------------------------------
# eval

def reference_draw(cfg: RunConfig, n: int) -> np.ndarray:
    if cfg.gmm is None:
        return load_data(cfg)
    pts, _ = cfg.gmm.sample(n, rngmod.stream(stage_seed(cfg.seed, "reference"), rngmod.REFERENCE))
    return pts


def run_eval(cfg: RunConfig, out: Path):
    batches = _load_batches(cfg, out)
    ev = cfg.section("eval")
    ref = reference_draw(cfg, int(ev["n_reference"]))
    report = {"run_digest": cfg.digest(), "energy": {}, "moments": {}, "mmr": []}

    perm_seed = stage_seed(cfg.seed, "permutation")
    with open(out / "energy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sampler", "nfe", "energy_distance", "null_p95", "below_null"])
        for name, b in batches.items():
            ed = energy_distance(b, ref)
            null = energy_permutation_null(b, ref, int(ev["n_permutations"]), seed=perm_seed)
            thr = permutation_threshold(null)
            report["energy"][name] = {"nfe": b.nfe, "energy_distance": ed, "null": null.tolist(),
                                      "null_p95": thr, "below_null": bool(ed <= thr)}
            w.writerow([name, repr(b.nfe), repr(ed), repr(thr), int(ed <= thr)])

    sets = {"reference": ref, **{k: b.samples for k, b in batches.items()}}
    with open(out / "moments.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        d = ref.shape[1]
        w.writerow(["set", "n"] + [f"mean{j}" for j in range(d)]
                   + [f"cov{i}{j}" for i in range(d) for j in range(i, d)])
        for name, x in sets.items():
            mu = x.mean(axis=0)
            cov = np.atleast_2d(np.cov(x.T))
            report["moments"][name] = {"mean": mu.tolist(), "cov": cov.tolist()}
            w.writerow([name, x.shape[0]] + [repr(float(v)) for v in mu]
                       + [repr(float(cov[i, j])) for i in range(d) for j in range(i, d)])

    if cfg.gmm is not None:
        clf = BayesClassifier(cfg.gmm)
        with open(out / "mmr.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sampler", "lambda", "K", "flagged", "mmr"])
            for lam in ev["lambdas"]:
                for name, b in batches.items():
                    r = mmr(b, clf, float(lam))
                    report["mmr"].append({"sampler": name, "lambda": float(lam), "K": r.K,
                                          "flagged": r.count, "mmr": r.mmr})
                    w.writerow([name, repr(float(lam)), r.K, r.count, repr(r.mmr)])
        if ev.get("plot", True) and ref.shape[1] == 2:
            _plot_scatter(sets, clf, out / "scatter.png")

    _write_json(out / "report.json", report)
    return report


def _plot_scatter(sets, clf, path):
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(sets), figsize=(4 * len(sets), 4), sharex=True, sharey=True)
    for ax, (name, x) in zip(np.atleast_1d(axes), sets.items()):
        cls = np.argmax(clf(x), axis=1)
        ax.scatter(x[:, 0], x[:, 1], c=cls, s=1, cmap="tab10", vmin=0, vmax=9, rasterized=True)
        ax.set_title(name)
        ax.set_aspect("equal")
    fig.tight_layout()
    _savefig(fig, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# oracle check

def mc_rate(sizes, n_seeds: int, seed: int):
    """Mean absolute volume error of the symmetric-boundary 1D instance at each ``N``.

    Targets (-1, 1) with weights (0.75, 0.25) at their exact heights; the
    error is measured against the analytic cell mass.
    """
    targets = TargetSet(np.array([[-1.0], [1.0]]), np.array([0.75, 0.25]))
    pot = BrenierPotential(targets, solve_1d_exact(targets))
    errors = []
    for n in sizes:
        errs = [abs(estimate_cell_volumes(pot, n, seed, counter=k)[0] - 0.75) for k in range(n_seeds)]
        errors.append(float(np.mean(errs)))
    slope = float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])
    return errors, slope


def run_oracle_check(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    oc = cfg.section("oracle")
    seed = stage_seed(cfg.seed, "oracle")
    doc = {"run_digest": cfg.digest()}

    targets = TargetSet(np.array([[-1.0], [1.0]]), np.array([0.75, 0.25]))
    # the 1D check uses solver defaults; run-specific settings target the run's latents
    pot1, _ = fit(targets, SolverConfig(seed=seed))
    h_star = solve_1d_exact(targets)
    doc["one_d"] = {"instance": instance_digest(targets), "heights": pot1.heights.tolist(),
                    "heights_exact": h_star.tolist(), "height_error": height_error(pot1.heights, h_star),
                    "gap": float(pot1.heights[0] - pot1.heights[1]),
                    "gap_exact": float(h_star[0] - h_star[1])}

    sizes = [int(v) for v in oc["mc_sizes"]]
    errors, slope = mc_rate(sizes, int(oc["mc_seeds"]), seed)
    doc["mc_rate"] = {"sizes": sizes, "mean_abs_error": errors, "slope": slope}
    _plot_slope(sizes, errors, slope, out / "mc_slope.png")

    pot_path = out / POTENTIAL
    if pot_path.exists():
        pot = BrenierPotential.load(pot_path)
        fit_doc = json.loads((out / "fit.json").read_text()) if (out / "fit.json").exists() else {}
        entry = {"instance": instance_digest(pot.targets), "potential_digest": potential_digest(pot)}
        if pot.dim == 2:
            entry["grid_deviation"] = grid_validate_2d(pot, int(oc["grid_resolution"]))
            entry["achieved_tol"] = fit_doc.get("achieved_tol")
        doc["run_potential"] = entry

    _write_json(out / "oracle_report.json", doc)
    return doc


def _plot_slope(sizes, errors, slope, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(sizes, errors, "o-", label=f"slope {slope:.3f}")
    ref = errors[0] * (np.asarray(sizes) / sizes[0]) ** -0.5
    ax.loglog(sizes, ref, "k--", lw=0.8, label="N^-1/2")
    ax.set_xlabel("N")
    ax.set_ylabel("mean |w - Phi(b)|")
    ax.legend()
    fig.tight_layout()
    _savefig(fig, path)
    plt.close(fig)


def run_all(cfg: RunConfig, out: Path, force: bool = False):
    make_latents(cfg, out, force=force)
    run_fit(cfg, out)
    run_sample(cfg, out)
    report = run_eval(cfg, out)
    run_oracle_check(cfg, out)
    return report


__all__ = ["LatentStore", "stage_seed", "make_latents", "run_fit", "run_sample", "run_eval",
           "run_oracle_check", "run_all", "mc_rate", "reference_draw", "load_data", "score_provider"]
