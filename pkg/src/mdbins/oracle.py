"""Exact distributions of tiny instances, by exhaustive expansion in rationals."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .core import AllocationConfig, ConfigError, LoadMatrix, normalize
from .potentials import default_params, gamma

MAX_BRANCHES = 10**7
ORACLE_KINDS = ("one-choice", "d-choice", "beta-choice", "greedy-with-ties")


class ForbiddenOutcome(AssertionError):
    """A simulated outcome has probability zero under the exact distribution."""


@dataclass
class ExactDistribution:
    outcomes: dict[tuple, Fraction]
    expected_gap: Fraction
    expected_gamma: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    pvalue: float
    dof: int
    cells: int


def _ball_outcomes(config: AllocationConfig) -> list[tuple[tuple[int, ...], Fraction]]:
    src, D = config.source, config.D
    if src.variant == "fixed-f-uniform":
        subsets = list(itertools.combinations(range(D), src.f))
        p = Fraction(1, len(subsets))
        return [(s, p) for s in subsets]
    if src.variant == "fixed-f-nonuniform":
        w = [Fraction(x) for x in src.dim_weights]
        total = sum(w)
        w = [x / total for x in w]
        probs: dict[tuple[int, ...], Fraction] = defaultdict(Fraction)
        for seq in itertools.permutations(range(D), src.f):
            p, left = Fraction(1), Fraction(1)
            for dim in seq:
                if left == 0:
                    p = Fraction(0)
                    break
                p *= w[dim] / left
                left -= w[dim]
            if p:
                probs[tuple(sorted(seq))] += p
        return sorted(probs.items())
    raise ConfigError(f"exact enumeration does not support source {src.variant}")


def _choice_outcomes(config: AllocationConfig, R: tuple[int, ...]):
    """(bins receiving a copy, probability) for every sample realization."""
    spec, n = config.process, config.n
    k = spec.samples
    p_tuple = Fraction(1, n**k)
    out = []
    for sampled in itertools.product(range(n), repeat=k):
        least = min(sampled, key=lambda j: (R[j], j))
        if spec.kind == "one-choice":
            out.append(((sampled[0],), p_tuple))
        elif spec.kind == "d-choice":
            out.append(((least,), p_tuple))
        elif spec.kind == "beta-choice":
            b = Fraction(spec.beta)
            out.append(((least,), p_tuple * b))
            out.append(((sampled[0],), p_tuple * (1 - b)))
        else:
            lo = R[least]
            out.append((tuple(sorted({j for j in sampled if R[j] == lo})), p_tuple))
    return out


def search_space(config: AllocationConfig) -> int:
    balls = len(_ball_outcomes(config))
    per_step = balls * config.n ** config.process.samples
    if config.process.kind == "beta-choice":
        per_step *= 2
    return per_step**config.m


def enumerate_exact(config: AllocationConfig, initial: LoadMatrix | None = None,
                    potentials=None) -> ExactDistribution:
    """Exact distribution of the final load matrix after ``config.m`` balls.

    ``potentials`` maps variant names to PotentialParams for the expected
    Gamma values; by default the unweighted and beta-plain variants at
    epsilon = 1/4.
    """
    if config.process.kind not in ORACLE_KINDS:
        raise ConfigError(f"exact enumeration does not support {config.process.kind}")
    size = search_space(config)
    if size > MAX_BRANCHES:
        raise ConfigError(f"search space {size} exceeds {MAX_BRANCHES}")
    if initial is not None and initial.is_real:
        raise ConfigError("exact enumeration needs integer loads")
    n, D = config.n, config.D
    balls = _ball_outcomes(config)
    start = tuple(tuple(r) for r in initial.L.tolist()) if initial is not None else tuple((0,) * n for _ in range(D))
    layer: dict[tuple, Fraction] = {start: Fraction(1)}
    for _ in range(config.m):
        nxt: dict[tuple, Fraction] = defaultdict(Fraction)
        for L, p in layer.items():
            R = tuple(sum(L[d][i] for d in range(D)) for i in range(n))
            choices = _choice_outcomes(config, R)
            for dims, pb in balls:
                for bins, pc in choices:
                    rows = [list(r) for r in L]
                    for j in bins:
                        for d in dims:
                            rows[d][j] += 1
                    nxt[tuple(tuple(r) for r in rows)] += p * pb * pc
        layer = dict(nxt)
    assert sum(layer.values()) == 1

    def gap(L):
        return max(max(Fraction(x) for x in row) - Fraction(sum(row), n) for row in L)

    expected_gap = sum((p * gap(L) for L, p in layer.items()), Fraction(0))
    if potentials is None:
        f = config.source.f
        potentials = {v: default_params(v, f, 0.25) for v in ("unweighted-grouped", "beta-plain")}
    expected_gamma = {}
    for name, params in potentials.items():
        acc = math.fsum(
            float(p) * gamma(normalize(LoadMatrix.from_loads(np.array(L, dtype=np.int64))), params).gamma
            for L, p in layer.items()
        )
        expected_gamma[name] = acc
    return ExactDistribution(layer, expected_gap, expected_gamma)


def _pooled_cells(probs: list[Fraction], total: int) -> list[list[int]]:
    """Group outcome indices (ascending probability) until each has expected count >= 5."""
    order = sorted(range(len(probs)), key=lambda i: probs[i])
    cells, current, mass = [], [], Fraction(0)
    for i in order:
        current.append(i)
        mass += probs[i]
        if mass * total >= 5:
            cells.append(current)
            current, mass = [], Fraction(0)
    if current:
        if cells:
            cells[-1].extend(current)
        else:
            cells.append(current)
    return cells


def chi_square_compare(dist: ExactDistribution, trials) -> ChiSquareResult:
    """Goodness of fit of simulated final states against the exact distribution.

    ``trials`` holds LoadMatrix objects or their ``key()`` tuples.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("no trials to compare")
    keys = list(dist.outcomes)
    index = {k: i for i, k in enumerate(keys)}
    observed = np.zeros(len(keys), np.int64)
    for tr in trials:
        k = tr.key() if isinstance(tr, LoadMatrix) else tr
        if k not in index or dist.outcomes[k] == 0:
            raise ForbiddenOutcome(f"outcome {k} has probability 0")
        observed[index[k]] += 1
    total = len(trials)
    probs = [dist.outcomes[k] for k in keys]
    cells = _pooled_cells(probs, total)
    obs = np.array([observed[c].sum() for c in cells], dtype=float)
    exp = np.array([float(sum(probs[i] for i in c)) * total for c in cells])
    if len(cells) < 2:
        return ChiSquareResult(0.0, 1.0, 0, len(cells))
    stat, p = stats.chisquare(obs, exp)
    return ChiSquareResult(float(stat), float(p), len(cells) - 1, len(cells))
