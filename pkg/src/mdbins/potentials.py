"""Exponential potentials over the sorted per-bin sums and their one-step drift."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import BallSourceSpec, ConfigError, LoadMatrix, NormalizedState, generate_ball, normalize
from .processes import ProcessSpec, select_bins

VARIANTS = ("unweighted-grouped", "weighted-ranked", "beta-plain")

# e**700 is near the top of the double range
EXP_LIMIT = 700.0


class PotentialOverflow(ArithmeticError):
    """alpha * |s_i| is too large to evaluate; the potential has diverged."""


@dataclass(frozen=True)
class PotentialParams:
    variant: str
    epsilon: float
    alpha: float
    theta: float = 5.0
    gamma1: float = 0.2
    gamma2: float = 0.8
    gamma3: float = 0.4
    gamma4: float = 0.6
    S: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown potential variant {self.variant!r}")
        if not 0 < self.epsilon <= 0.25:
            raise ConfigError(f"epsilon must lie in (0, 1/4], got {self.epsilon}")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        g1, g2, g3, g4 = self.gamma1, self.gamma2, self.gamma3, self.gamma4
        if not (self.theta > 1 and math.isclose(self.theta * g1, 1.0, rel_tol=1e-12)):
            raise ConfigError("need theta > 1 and theta * gamma1 = 1")
        if self.variant == "weighted-ranked":
            ok = 0 < g1 < g2 < 0.5 < g4 < g3 and g2 + g3 > 1 and g1 + g4 < 1 and g2 < 7 / 16
            if self.S is None or self.lam is None or self.S < 1 or self.lam <= 0:
                raise ConfigError("weighted-ranked needs S >= 1 and lambda > 0")
        else:
            ok = (
                0 < g1 < g3 < 0.5 < g4 < g2 < 1
                and math.isclose(g1 + g2, 1.0)
                and math.isclose(g3 + g4, 1.0)
            )
        if not ok:
            raise ConfigError(f"gamma constants violate the {self.variant} ordering")


@dataclass(frozen=True)
class PotentialValue:
    phi: float
    psi: float
    gamma: float


@dataclass(frozen=True)
class DriftEstimate:
    mean_dgamma: float
    ci_dgamma: float
    mean_dphi: float
    ci_dphi: float
    mean_dpsi: float
    ci_dpsi: float
    samples: int
    before: PotentialValue


def default_params(variant: str, load: float, epsilon: float, S: float | None = None,
                   lam: float | None = None) -> PotentialParams:
    """Standard constants for a variant; ``load`` is f (or f* for weighted balls)."""
    if not 0 < epsilon <= 0.25:
        raise ConfigError(f"epsilon must lie in (0, 1/4], got {epsilon}")
    if variant == "weighted-ranked":
        if S is None or lam is None:
            raise ConfigError("weighted-ranked needs S and lambda")
        alpha = min(epsilon / (6 * S), 2 / lam, epsilon / (2 * load))
        return PotentialParams(variant, epsilon, alpha, 5.0, 0.2, 0.4, 0.7, 0.6, S, lam)
    return PotentialParams(variant, epsilon, epsilon / (2 * load))


def equi_load_groups(s) -> list[tuple[int, int]]:
    """Maximal runs of equal values in a non-increasing vector, as (1-based start, size)."""
    groups = []
    start = 0
    for i in range(1, len(s) + 1):
        if i == len(s) or s[i] != s[start]:
            groups.append((start + 1, i - start))
            start = i
    return groups


def rank_weights(variant: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, n + 1, dtype=np.longdouble)
    if variant == "unweighted-grouped":
        return 1 / i, 1 / i
    if variant == "weighted-ranked":
        n2 = np.longdouble(n) ** 2
        return 1 / (n2 + i), 1 / (n2 + n - i + 1)
    one = np.ones(n, np.longdouble)
    return one, one


def gamma_sorted(s_desc: np.ndarray, params: PotentialParams) -> PotentialValue:
    """Potentials for a sum-load vector already sorted non-increasing."""
    a = params.alpha
    worst = a * float(np.abs(s_desc).max(initial=0.0))
    if worst > EXP_LIMIT:
        raise PotentialOverflow(f"alpha*|s| reaches {worst:.1f} > {EXP_LIMIT}")
    wphi, wpsi = rank_weights(params.variant, len(s_desc))
    e = np.asarray(s_desc, np.longdouble) * np.longdouble(a)
    phi = float((np.exp(e) * wphi).sum())
    psi = float((np.exp(-e) * wpsi).sum())
    return PotentialValue(phi, psi, phi + psi)


def gamma(state: NormalizedState, params: PotentialParams) -> PotentialValue:
    return gamma_sorted(state.sorted_s, params)


def _sorted_after(state: LoadMatrix, bins, weight) -> np.ndarray:
    n = state.n
    R = state.R.copy()
    R[bins] += weight
    total = state.T.sum() + weight * len(bins)
    scaled = n * R - total
    return np.sort(scaled)[::-1] / n


def drift_estimate(state: LoadMatrix, process: ProcessSpec, source: BallSourceSpec,
                   params: PotentialParams, samples: int, rng: np.random.Generator) -> DriftEstimate:
    """Monte Carlo one-step change of Phi, Psi and Gamma from a frozen state.

    Each sample draws a fresh ball and bin choice; the half-widths are the
    normal-approximation 95% intervals of the sample means.
    """
    if samples < 100:
        raise ValueError("drift_estimate needs at least 100 samples")
    norm = normalize(state)
    before = gamma(norm, params)
    d = np.empty((samples, 2))
    for k in range(samples):
        ball = generate_ball(source, state.D, rng)
        bins = select_bins(norm, process, rng)
        after = gamma_sorted(_sorted_after(state, bins, ball.weight), params)
        d[k] = after.phi - before.phi, after.psi - before.psi
    dg = d.sum(axis=1)
    z = stats.norm.ppf(0.975)

    def half(col):
        return float(z * col.std(ddof=1) / math.sqrt(samples))

    return DriftEstimate(
        float(dg.mean()), half(dg),
        float(d[:, 0].mean()), half(d[:, 0]),
        float(d[:, 1].mean()), half(d[:, 1]),
        samples, before,
    )


def mgf_binomial(z: float, D: int, q: float) -> float:
    """E[exp(z f)] for f ~ Binomial(D, q)."""
    return (1 - q + q * math.exp(z)) ** D


def mgf_bound_S(D: int, q: float, lam: float, points: int = 1000) -> float:
    """Half the largest E[f^2 exp(z f)] over a grid on |z| <= lam/2, floored at 1."""
    z = np.linspace(-lam / 2, lam / 2, points)
    k = np.arange(D + 1)
    pmf = stats.binom.pmf(k, D, q)
    second = (pmf * k**2 * np.exp(np.outer(z, k))).sum(axis=1)
    return max(1.0, float(second.max()) / 2)
