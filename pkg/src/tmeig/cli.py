"""Command-line experiment harness.

    tmeig validate --config exp.yaml
    tmeig sweep    --config exp.yaml --out results/ --workers 4
    tmeig estimate | nmc | dimred  (same flags)

Every run writes ``results.csv``, ``aggregates.json`` and ``manifest.json``
into the output directory, plus ``errors.log`` when a cell failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .dimred import dimred_grid
from .estimators import convergence_sweep

log = logging.getLogger("tmeig")

VERBS = ("estimate", "sweep", "dimred", "nmc", "validate")
_NEEDS_LIKELIHOOD = {"m", "nmc"}
_NEEDS_PRIOR = {"pos"}


def _check_capabilities(cfg, model, verb):
    kinds = ["nmc"] if verb == "nmc" else list(cfg.kinds)
    for i, kind in enumerate(kinds):
        if kind in _NEEDS_LIKELIHOOD and not getattr(model, "has_likelihood", False):
            raise ConfigError(f"kinds[{i}]", f"estimator {kind!r} needs an exact likelihood")
        if kind in _NEEDS_PRIOR and not getattr(model, "has_prior_density", False):
            raise ConfigError(f"kinds[{i}]", f"estimator {kind!r} needs the prior density")
    if verb == "dimred":
        if cfg.dimred is None:
            raise ConfigError("dimred", "the dimred verb needs a 'dimred' section")
        for name, vals, top in (("r", cfg.dimred.r, model.n_x), ("s", cfg.dimred.s, model.n_y)):
            for i, v in enumerate(vals):
                if v > top:
                    raise ConfigError(f"dimred.{name}[{i}]", f"{v} exceeds the dimension {top}")
        if not getattr(model, "has_gradient", False):
            raise ConfigError("model", "dimension reduction needs forward-model gradients")


def run(verb, cfg, model, seed, workers):
    """Run one verb; returns ``(table, n_cells)``."""
    if verb in ("sweep", "estimate"):
        transport = [k for k in cfg.kinds if k != "nmc"]
        table = convergence_sweep(
            model,
            transport,
            cfg.p,
            cfg.L,
            cfg.replicates,
            seed,
            degree=cfg.degree,
            nmc="nmc" in cfg.kinds,
            workers=workers,
        )
        n_cells = len(cfg.p) * len(cfg.L) * cfg.replicates * bool(transport)
        n_cells += len(cfg.L) * cfg.replicates * ("nmc" in cfg.kinds)
        return table, n_cells
    if verb == "nmc":
        table = convergence_sweep(
            model, (), [], cfg.L, cfg.replicates, seed, nmc=True, workers=workers
        )
        return table, len(cfg.L) * cfg.replicates
    if verb == "dimred":
        grid = [(r, s) for r in cfg.dimred.r for s in cfg.dimred.s]
        table = dimred_grid(
            model,
            cfg.dimred.methods,
            grid,
            cfg.replicates,
            cfg.L[0],
            cfg.p[0],
            seed,
            degree=cfg.degree,
            n_mc=cfg.dimred.n_mc,
            workers=workers,
        )
        return table, len(grid) * cfg.replicates
    raise ValueError(verb)


def _errors(table):
    return [r for r in table.rows if r.get("error")]


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tmeig", description=__doc__.splitlines()[0])
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, default=None, help="overrides the config out")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")

    try:
        cfg, digest = load_config(args.config)
        model = cfg.build_model()
        if args.verb != "validate":
            _check_capabilities(cfg, model, args.verb)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.verb == "validate":
        print(f"{args.config}: ok ({cfg.experiment})")
        return 0

    seed = cfg.seed if args.seed is None else args.seed
    out = args.out if args.out is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        table, n_cells = run(args.verb, cfg, model, seed, args.workers)
    except Exception as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    table.to_csv(out / "results.csv")
    (out / "aggregates.json").write_text(
        json.dumps(table.aggregates_json(), indent=1, sort_keys=True) + "\n"
    )
    failed = _errors(table)
    failed_cells = {(r.get("replicate"), r.get("seed")) for r in failed}
    manifest = {
        "config_sha256": digest,
        "seed": seed,
        "version": __version__,
        "started_at": started.isoformat(),
        "elapsed_s": round(time.perf_counter() - t0, 3),
        "n_cells": n_cells,
        "n_failed": len(failed_cells),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    if failed:
        with open(out / "errors.log", "w") as fh:
            for r in failed:
                fh.write(f"seed={r['seed']} replicate={r['replicate']}: {r['error']}\n")
        print(f"{len(failed_cells)} of {n_cells} cells failed, see {out / 'errors.log'}", file=sys.stderr)
        return 1
    print(f"wrote {len(table)} rows to {out / 'results.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
