"""Command line entry point: run, drift, oracle-check, bounds."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace

import numpy as np

from .core import ConfigError, derive_seed
from .harness import read_plan, run_plan, run_trials
from .metrics import bound_curves
from .oracle import ForbiddenOutcome, chi_square_compare, enumerate_exact
from .potentials import PotentialOverflow, drift_estimate
from .processes import RunawayRounds, simulate

EXIT_OK, EXIT_INVALID, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3
ORACLE_ALPHA = 0.01

log = logging.getLogger("mdbins")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    plan = read_plan(args.plan)
    summary = run_plan(plan, output=args.output, workers=args.workers)
    _emit(summary)
    return EXIT_OK


def cmd_drift(args) -> int:
    plan = read_plan(args.plan)
    cfg = plan.base
    params = plan.potential_for(cfg)
    if params is None:
        raise ConfigError("drift needs potential.variant in the plan")
    if args.at < 0:
        raise ConfigError("--at must be >= 0")
    state = simulate(replace(cfg, m=args.at, checkpoints=(args.at,), seed=derive_seed(plan.root_seed, 0, 0)))
    rng = np.random.default_rng(derive_seed(plan.root_seed, 0, 0, 1))
    est = drift_estimate(state, cfg.process, cfg.source, params, args.samples, rng)
    out = asdict(est)
    before = out.pop("before")
    _emit({"t": args.at, "variant": params.variant, "alpha": params.alpha, **before, **out})
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    plan = read_plan(args.plan)
    cfg = plan.base
    dist = enumerate_exact(cfg)
    finals = (simulate(replace(cfg, seed=derive_seed(plan.root_seed, 0, k))) for k in range(args.trials))
    try:
        res = chi_square_compare(dist, finals)
    except ForbiddenOutcome as exc:
        _emit({"passed": False, "forbidden_outcome": str(exc)})
        return EXIT_CHECK
    passed = res.pvalue > ORACLE_ALPHA
    _emit({
        "passed": passed,
        "statistic": res.statistic,
        "pvalue": res.pvalue,
        "dof": res.dof,
        "trials": args.trials,
        "outcomes": len(dist.outcomes),
        "expected_gap": str(dist.expected_gap),
    })
    return EXIT_OK if passed else EXIT_CHECK


def cmd_bounds(args) -> int:
    plan = read_plan(args.plan)
    zeta = args.zeta if args.zeta is not None else plan.zeta
    out = []
    for point, value, records in run_trials(plan, workers=args.workers):
        cfg = plan.points()[point][2]
        curves = asdict(bound_curves(cfg, zeta))
        out.append({
            "point": point,
            "value": value,
            "n": cfg.n, "m": cfg.m, "D": cfg.D,
            "bounds": curves,
            "median_max_gap": float(np.median([r.final.max_gap for r in records])),
            "median_sum_gap": float(np.median([r.final.sum_gap for r in records])),
            "median_ball_count_gap": float(np.median([r.final.ball_count_gap for r in records])),
        })
    _emit({"param": plan.sweep_param, "points": out})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdbins", description="Multidimensional balls-into-bins experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a plan, write CSV + JSON")
    r.add_argument("plan")
    r.add_argument("--output", help="output prefix (overrides the plan)")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("drift", help="one-step potential drift from the state at ball count t")
    d.add_argument("plan")
    d.add_argument("--at", type=int, required=True)
    d.add_argument("--samples", type=int, default=1000)
    d.set_defaults(func=cmd_drift)

    o = sub.add_parser("oracle-check", help="compare simulation with exact enumeration")
    o.add_argument("plan")
    o.add_argument("--trials", type=int, default=100_000)
    o.set_defaults(func=cmd_oracle_check)

    b = sub.add_parser("bounds", help="bound curves next to observed median gaps")
    b.add_argument("plan")
    b.add_argument("--zeta", type=float)
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RunawayRounds, PotentialOverflow) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
