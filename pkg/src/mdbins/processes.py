"""Allocation rules: rank probability vectors, bin selection and the trial runners."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import (
    AllocationConfig,
    ConfigError,
    LoadMatrix,
    NormalizedState,
    draw_balls,
    trial_streams,
)
from .metrics import gap_report
from .records import CheckpointRow, TrajectoryRecord

log = logging.getLogger(__name__)

KINDS = ("one-choice", "d-choice", "beta-choice", "greedy-with-ties", "parallel-rounds")
SEQUENTIAL_KINDS = ("one-choice", "d-choice", "beta-choice")
_KIND_CODE = {
    "one-choice": K.ONE_CHOICE,
    "d-choice": K.D_CHOICE,
    "beta-choice": K.BETA_CHOICE,
    "greedy-with-ties": K.GREEDY_TIES,
}

# balls drawn per batch; fixed so trajectories do not depend on checkpoints
CHUNK = 1 << 15


class RunawayRounds(RuntimeError):
    pass


@dataclass(frozen=True)
class ProcessSpec:
    kind: str
    d: int | None = None
    beta: float | None = None

    def validate(self, n: int | None = None) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown process kind {self.kind!r}")
        needs_d = self.kind in ("d-choice", "greedy-with-ties", "parallel-rounds")
        if needs_d != (self.d is not None):
            raise ConfigError(f"{self.kind}: d must {'' if needs_d else 'not '}be set")
        if needs_d and not (isinstance(self.d, (int, np.integer)) and self.d >= 2):
            raise ConfigError(f"{self.kind}: need integer d >= 2, got {self.d}")
        if (self.kind == "beta-choice") != (self.beta is not None):
            raise ConfigError(f"{self.kind}: beta must {'' if self.kind == 'beta-choice' else 'not '}be set")
        if self.beta is not None and not 0 <= self.beta <= 1:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def samples(self) -> int:
        """Bins sampled per ball."""
        if self.kind == "one-choice":
            return 1
        if self.kind == "beta-choice":
            return 2
        return self.d


def probability_vector(spec: ProcessSpec, n: int) -> np.ndarray:
    """Probability that a ball lands in the i-th most loaded bin (distinct loads)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1, dtype=float)
    if spec.kind == "one-choice":
        return np.full(n, 1.0 / n)
    if spec.kind == "beta-choice":
        b = spec.beta
        return (1 - b) / n + b * (2 * i - 1) / n**2
    d = spec.d
    return (i / n) ** d - ((i - 1) / n) ** d


def _least_s(s: np.ndarray, sampled) -> int:
    return min(sampled, key=lambda j: (s[j], j))


def select_bins(state: NormalizedState, spec: ProcessSpec, rng: np.random.Generator) -> list[int]:
    """Bins that receive a copy of the next ball (more than one only for tie copies)."""
    n = state.n
    if spec.kind == "one-choice":
        return [int(rng.integers(n))]
    if spec.kind == "beta-choice":
        sampled = rng.integers(0, n, 2).tolist()
        if rng.random() < spec.beta:
            return [_least_s(state.s, sampled)]
        return [sampled[0]]
    sampled = rng.integers(0, n, spec.d).tolist()
    if spec.kind == "d-choice":
        return [_least_s(state.s, sampled)]
    lo = min(state.s[j] for j in sampled)
    return sorted({j for j in sampled if state.s[j] == lo})


def select_bin(state: NormalizedState, spec: ProcessSpec, rng: np.random.Generator) -> int:
    return select_bins(state, spec, rng)[0]


def round_limit(m: int, n: int, d: int) -> int:
    loglog = math.log2(math.log2(n)) if n > 2 else 0.0
    return math.ceil(64 * (m / n + loglog + d + 2))


def _checkpoint_row(state: LoadMatrix, potential, rounds=None) -> CheckpointRow:
    g = gap_report(state)
    phi = psi = gam = None
    if potential is not None:
        from .potentials import PotentialOverflow, gamma
        from .core import normalize

        try:
            v = gamma(normalize(state), potential)
            phi, psi, gam = v.phi, v.psi, v.gamma
        except PotentialOverflow as exc:
            log.warning("potential diverged at t=%d: %s", state.t, exc)
            phi = psi = gam = math.inf
    return CheckpointRow(state.t, g.max_gap, g.sum_gap, g.ball_count_gap, phi, psi, gam, rounds)


def _draw_chunk(config, ball_rng, choice_rng, coin_rng, count):
    balls = draw_balls(config.source, config.D, ball_rng, count)
    ball_w = balls.sum(axis=1)
    choices = choice_rng.integers(0, config.n, size=(count, config.process.samples), dtype=np.int64)
    if config.process.kind == "beta-choice":
        coins = coin_rng.random(count)
    else:
        coins = np.empty(0)
    return balls, ball_w, choices, coins


def _simulate(config: AllocationConfig, on_checkpoint=None) -> LoadMatrix:
    spec = config.process
    kind = _KIND_CODE[spec.kind]
    beta = spec.beta if spec.beta is not None else 0.0
    streams = trial_streams(config.seed)
    state = LoadMatrix.empty(config.n, config.D, config.source.is_real)
    cps = list(config.checkpoints) if on_checkpoint else []
    ci = 0
    while ci < len(cps) and cps[ci] == 0:
        on_checkpoint(state)
        ci += 1
    pos = 0
    while pos < config.m:
        count = min(CHUNK, config.m - pos)
        balls, ball_w, choices, coins = _draw_chunk(config, *streams, count)
        r = 0
        while r < count:
            stop = count
            if ci < len(cps):
                stop = min(count, cps[ci] - pos + r)
            K.place_sequential(state.L, state.T, state.R, state.counts, balls, ball_w, choices, coins, kind, beta, r, stop)
            pos += stop - r
            r = stop
            state.t = pos
            if ci < len(cps) and pos == cps[ci]:
                on_checkpoint(state)
                ci += 1
    return state


def _record(config, potential, trial, point, simulate):
    rows = []
    final = simulate(config, lambda st: rows.append(_checkpoint_row(st, potential)))
    return TrajectoryRecord(trial, config.seed, rows, point=point, final_state=final)


def run_sequential(config: AllocationConfig, potential=None, trial: int = 0, point: int = 0) -> TrajectoryRecord:
    """One trial of a sequential rule, with metrics (and potentials) at each checkpoint."""
    if config.process.kind not in SEQUENTIAL_KINDS + ("greedy-with-ties",):
        raise ConfigError(f"run_sequential cannot run {config.process.kind}")
    return _record(config, potential, trial, point, _simulate)


def run_greedy_with_ties(config: AllocationConfig, potential=None, trial: int = 0, point: int = 0) -> TrajectoryRecord:
    if config.process.kind != "greedy-with-ties":
        raise ConfigError("run_greedy_with_ties needs process.kind = greedy-with-ties")
    return _record(config, potential, trial, point, _simulate)


def _parallel(config: AllocationConfig):
    streams = trial_streams(config.seed)
    parts = [
        _draw_chunk(config, *streams, min(CHUNK, config.m - pos))
        for pos in range(0, config.m, CHUNK)
    ]
    if parts:
        balls = np.concatenate([p[0] for p in parts])
        ball_w = np.concatenate([p[1] for p in parts])
        choices = np.concatenate([p[2] for p in parts])
    else:
        real = config.source.is_real
        balls = np.zeros((0, config.D), np.float64 if real else np.int64)
        ball_w = balls.sum(axis=1)
        choices = np.zeros((0, config.process.d), np.int64)
    limit = round_limit(config.m, config.n, config.process.d)
    R = np.zeros(config.n, ball_w.dtype)
    commit, placed, rounds = K.parallel_rounds(config.n, choices, ball_w, R, limit)
    if rounds < 0:
        raise RunawayRounds(
            f"parallel protocol exceeded {limit} rounds (n={config.n}, m={config.m}, d={config.process.d}, seed={config.seed})"
        )
    return balls, ball_w, choices, commit, placed, rounds


def run_parallel_rounds(config: AllocationConfig, potential=None, trial: int = 0, point: int = 0) -> TrajectoryRecord:
    """Run the multi-round bid/accept protocol.

    Checkpoint rows describe the loads contributed by balls with ID < t;
    ``rounds_used`` on a row is the round by which all of them committed.
    """
    if config.process.kind != "parallel-rounds":
        raise ConfigError("run_parallel_rounds needs process.kind = parallel-rounds")
    balls, ball_w, choices, commit, placed, rounds = _parallel(config)
    state = LoadMatrix.empty(config.n, config.D, config.source.is_real)
    rows = []
    prev = 0
    for cp in config.checkpoints:
        K.apply_placements(state.L, state.T, state.R, state.counts, balls, ball_w, choices, placed, prev, cp)
        state.t = prev = cp
        used = int(commit[:cp].max()) if cp else 0
        rows.append(_checkpoint_row(state, potential, used))
    if prev < config.m:
        K.apply_placements(state.L, state.T, state.R, state.counts, balls, ball_w, choices, placed, prev, config.m)
        state.t = config.m
    return TrajectoryRecord(trial, config.seed, rows, rounds_used=rounds, point=point, final_state=state)


def run_trial(config: AllocationConfig, potential=None, trial: int = 0, point: int = 0) -> TrajectoryRecord:
    if config.process.kind == "parallel-rounds":
        return run_parallel_rounds(config, potential, trial, point)
    return run_sequential(config, potential, trial, point)


def simulate(config: AllocationConfig) -> LoadMatrix:
    """Final load matrix only; no per-checkpoint metrics."""
    if config.process.kind == "parallel-rounds":
        balls, ball_w, choices, commit, placed, rounds = _parallel(config)
        state = LoadMatrix.empty(config.n, config.D, config.source.is_real)
        K.apply_placements(state.L, state.T, state.R, state.counts, balls, ball_w, choices, placed, 0, config.m)
        state.t = config.m
        return state
    return _simulate(config)
