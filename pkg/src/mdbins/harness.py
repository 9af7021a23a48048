"""Experiment plans, trial orchestration and flat-file output.

Plan files are ``key = value`` lines; ``#`` starts a comment. See README for
the full list of keys.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import AllocationConfig, BallSourceSpec, ConfigError, WeightDist, derive_seed
from .potentials import PotentialParams, default_params, mgf_bound_S
from .processes import ProcessSpec, run_trial
from .records import CSV_COLUMNS, CheckpointRow, TrajectoryRecord

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("n", "m", "d", "beta", "f", "q", "D")
KNOWN_KEYS = {
    "n", "D", "m", "seed", "trials", "checkpoints", "output", "zeta",
    "source.variant", "source.f", "source.dim_weights", "source.q", "source.weight",
    "process.kind", "process.d", "process.beta",
    "sweep.param", "sweep.values",
    "potential.variant", "potential.epsilon", "potential.S", "potential.lambda",
}
WORKERS_ENV = "MDBINS_WORKERS"
BOOTSTRAP_RESAMPLES = 1000


class PlanError(ConfigError):
    pass


def parse_plan_text(text: str) -> dict[str, str]:
    settings = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise PlanError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in KNOWN_KEYS:
            raise PlanError(f"line {lineno}: unknown key {key!r}")
        if key in settings:
            raise PlanError(f"line {lineno}: duplicate key {key!r}")
        settings[key] = value
    return settings


def _count(text: str, n: int, what: str) -> int:
    """Integer, or a multiple of n written like ``100n``."""
    t = text.strip()
    try:
        if t.endswith("n"):
            return int(t[:-1] or 1) * n
        return int(t)
    except ValueError:
        raise PlanError(f"{what}: expected an integer or a multiple like '10n', got {text!r}") from None


def _int(settings, key, default=None) -> int | None:
    if key not in settings:
        return default
    try:
        return int(settings[key])
    except ValueError:
        raise PlanError(f"{key}: expected an integer, got {settings[key]!r}") from None


def _float(settings, key, default=None) -> float | None:
    if key not in settings:
        return default
    try:
        return float(settings[key])
    except ValueError:
        raise PlanError(f"{key}: expected a number, got {settings[key]!r}") from None


@dataclass(frozen=True)
class ExperimentPlan:
    settings: dict
    sweep_param: str | None
    sweep_values: tuple[str, ...]
    trials: int
    root_seed: int
    output: str | None
    zeta: float = 0.1

    @property
    def base(self) -> AllocationConfig:
        return build_config(self.settings)

    @property
    def potential_variant(self) -> str | None:
        return self.settings.get("potential.variant")

    def points(self) -> list[tuple[int, str | None, AllocationConfig]]:
        if self.sweep_param is None:
            return [(0, None, self.base)]
        out = []
        for i, v in enumerate(self.sweep_values):
            key = {"d": "process.d", "beta": "process.beta", "f": "source.f", "q": "source.q"}.get(
                self.sweep_param, self.sweep_param
            )
            out.append((i, v, build_config({**self.settings, key: v})))
        return out

    def potential_for(self, config: AllocationConfig) -> PotentialParams | None:
        variant = self.potential_variant
        if variant is None:
            return None
        eps = _float(self.settings, "potential.epsilon", 0.25)
        S = _float(self.settings, "potential.S")
        lam = _float(self.settings, "potential.lambda")
        if variant == "weighted-ranked" and S is None:
            if config.source.variant != "variable-f-binomial" or lam is None:
                raise PlanError("weighted-ranked needs potential.S, or a binomial source with potential.lambda")
            S = mgf_bound_S(config.D, config.source.q, lam)
        return default_params(variant, config.source.mean_load(config.D), eps, S, lam)


def build_config(settings: dict) -> AllocationConfig:
    for key in ("n", "m", "source.variant", "process.kind"):
        if key not in settings:
            raise PlanError(f"missing required key {key!r}")
    n = _int(settings, "n")
    if n is None or n < 1:
        raise PlanError("n must be >= 1")
    m = _count(settings["m"], n, "m")
    weights = settings.get("source.dim_weights")
    weight_dist = settings.get("source.weight")
    source = BallSourceSpec(
        settings["source.variant"],
        f=_int(settings, "source.f"),
        dim_weights=tuple(float(w) for w in weights.split(",")) if weights else None,
        q=_float(settings, "source.q"),
        weight_dist=WeightDist.parse(weight_dist) if weight_dist else None,
    )
    process = ProcessSpec(settings["process.kind"], _int(settings, "process.d"), _float(settings, "process.beta"))
    cps = settings.get("checkpoints")
    checkpoints = tuple(_count(c, n, "checkpoints") for c in cps.split(",")) if cps else None
    return AllocationConfig(
        n=n, D=_int(settings, "D", 1), m=m, source=source, process=process,
        seed=_int(settings, "seed", 0), checkpoints=checkpoints,
    )


def load_plan(text_or_settings) -> ExperimentPlan:
    settings = parse_plan_text(text_or_settings) if isinstance(text_or_settings, str) else dict(text_or_settings)
    param = settings.get("sweep.param")
    values: tuple[str, ...] = ()
    if param is not None:
        if param not in SWEEP_PARAMS:
            raise PlanError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
        values = tuple(v.strip() for v in settings.get("sweep.values", "").split(",") if v.strip())
        if not values:
            raise PlanError("sweep.param given without sweep.values")
    elif "sweep.values" in settings:
        raise PlanError("sweep.values given without sweep.param")
    trials = _int(settings, "trials", 1)
    if trials < 1:
        raise PlanError("trials must be >= 1")
    plan = ExperimentPlan(
        settings, param, values, trials, _int(settings, "seed", 0), settings.get("output"),
        _float(settings, "zeta", 0.1),
    )
    # validate every sweep point and its potential up front
    for _, _, cfg in plan.points():
        plan.potential_for(cfg)
    return plan


def read_plan(path) -> ExperimentPlan:
    return load_plan(Path(path).read_text())


def _worker_count(workers: int | None) -> int:
    """Requested workers, capped by the MDBINS_WORKERS environment variable."""
    env = os.environ.get(WORKERS_ENV)
    cap = max(1, int(env)) if env else None
    if workers is None:
        return cap or 1
    return max(1, min(workers, cap) if cap else workers)


def _run_task(task):
    config, potential, trial, point = task
    rec = run_trial(config, potential, trial, point)
    rec.final_state = None
    return rec


def run_trials(plan: ExperimentPlan, workers: int | None = None) -> list[tuple[int, str | None, list[TrajectoryRecord]]]:
    """Every (sweep point, trial), in that order, with seeds derived from the root seed."""
    tasks, meta = [], []
    for point, value, cfg in plan.points():
        potential = plan.potential_for(cfg)
        meta.append((point, value))
        for trial in range(plan.trials):
            seeded = replace(cfg, seed=derive_seed(plan.root_seed, point, trial))
            tasks.append((seeded, potential, trial, point))
    w = _worker_count(workers)
    if w == 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=w) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * w))))
    grouped = []
    for point, value in meta:
        grouped.append((point, value, [r for r in records if r.point == point]))
    return grouped


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, records: list[TrajectoryRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            for row in rec.rows:
                w.writerow([
                    rec.point, rec.trial, rec.seed, row.t,
                    _fmt(row.max_gap), _fmt(row.sum_gap), _fmt(row.ball_count_gap),
                    _fmt(row.phi), _fmt(row.psi), _fmt(row.gamma), _fmt(row.rounds_used),
                ])


def read_csv(path) -> list[TrajectoryRecord]:
    """Parse a trajectory CSV back into records (one per point and trial)."""
    def opt(cast, v):
        return None if v == "" else cast(v)

    records: dict[tuple[int, int], TrajectoryRecord] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        for r in reader:
            key = (int(r["point"]), int(r["trial"]))
            rec = records.get(key)
            if rec is None:
                rec = records[key] = TrajectoryRecord(key[1], int(r["seed"]), [], point=key[0])
            rec.rows.append(CheckpointRow(
                int(r["t"]), float(r["max_gap"]), float(r["sum_gap"]), float(r["ball_count_gap"]),
                opt(float, r["phi"]), opt(float, r["psi"]), opt(float, r["gamma"]), opt(int, r["rounds_used"]),
            ))
    for rec in records.values():
        used = [row.rounds_used for row in rec.rows if row.rounds_used is not None]
        rec.rounds_used = max(used) if used else None
    return list(records.values())


def bootstrap_ci(values, rng: np.random.Generator, stat=np.mean, resamples: int = BOOTSTRAP_RESAMPLES):
    x = np.asarray(values, dtype=float)
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    boot = stat(x[idx], axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return [float(lo), float(hi)]


def describe(values, rng: np.random.Generator) -> dict:
    x = np.asarray(values, dtype=float)
    return {
        "mean": float(x.mean()),
        "median": float(np.median(x)),
        "max": float(x.max()),
        "p95": float(np.percentile(x, 95)),
        "mean_ci95": bootstrap_ci(x, rng, np.mean),
        "median_ci95": bootstrap_ci(x, rng, np.median),
    }


def summarize(plan: ExperimentPlan, grouped) -> dict:
    points = []
    for point, value, records in grouped:
        cfg = plan.points()[point][2]
        rng = np.random.default_rng(derive_seed(plan.root_seed, point, 2**32))
        entry = {
            "point": point,
            "param": plan.sweep_param,
            "value": value,
            "n": cfg.n, "D": cfg.D, "m": cfg.m,
            "process": cfg.process.kind,
            "trials": len(records),
            "final_max_gap": describe([r.final.max_gap for r in records], rng),
            "final_sum_gap": describe([r.final.sum_gap for r in records], rng),
            "final_ball_count_gap": describe([r.final.ball_count_gap for r in records], rng),
        }
        if records and records[0].rounds_used is not None:
            entry["rounds_used"] = describe([r.rounds_used for r in records], rng)
        points.append(entry)
    return {"root_seed": plan.root_seed, "trials": plan.trials, "points": points}


def run_plan(plan: ExperimentPlan, output: str | None = None, workers: int | None = None) -> dict:
    """Run all trials, write ``<output>.csv`` and ``<output>.json``, return the summary."""
    prefix = output or plan.output
    if not prefix:
        raise PlanError("no output prefix (set 'output' in the plan or pass --output)")
    grouped = run_trials(plan, workers)
    summary = summarize(plan, grouped)
    prefix = Path(prefix)
    if prefix.parent and not prefix.parent.exists():
        prefix.parent.mkdir(parents=True)
    write_csv(prefix.with_name(prefix.name + ".csv"), [r for _, _, recs in grouped for r in recs])
    with open(prefix.with_name(prefix.name + ".json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    log.info("wrote %s.csv and %s.json", prefix, prefix)
    return summary
