"""Command-line entry point: ``dpmot <stage> --config run.yaml``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from ._backend import set_threads
from .config import RunConfig
from .errors import ConfigurationError, InputError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

STAGES = {
    "make-latents": lambda cfg, out, a: pipeline.make_latents(cfg, out, force=a.force),
    "fit": lambda cfg, out, a: pipeline.run_fit(cfg, out),
    "sample": lambda cfg, out, a: pipeline.run_sample(cfg, out),
    "eval": lambda cfg, out, a: pipeline.run_eval(cfg, out),
    "oracle-check": lambda cfg, out, a: pipeline.run_oracle_check(cfg, out),
    "all": lambda cfg, out, a: pipeline.run_all(cfg, out, force=a.force),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpmot", description="Semi-discrete OT jump + short reverse diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=None, help="run directory (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for the numba kernels")
        p.add_argument("--force", action="store_true", help="overwrite latents produced by another config")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        set_threads(args.threads)
        cfg = RunConfig.load(args.config, seed=args.seed)
        out = args.out if args.out is not None else cfg.out
        STAGES[args.command](cfg, out, args)
    except (ConfigurationError, InputError) as exc:
        print(f"dpmot: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"dpmot: numeric error: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None)
        if trace is not None and len(trace):
            print(f"dpmot: last trace record: max_dev={trace.max_dev[-1]!r} energy={trace.energy[-1]!r}",
                  file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
