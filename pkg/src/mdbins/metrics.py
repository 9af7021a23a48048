"""Gap statistics, closed-form bound curves and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AllocationConfig, ConfigError, LoadMatrix

REGRESSORS = ("lnln", "ln", "sqrt_mlnn_over_n")


@dataclass(frozen=True)
class GapReport:
    max_gap: float
    per_dim_gap: tuple[float, ...]
    sum_gap: float
    ball_count_gap: float
    t: int


@dataclass(frozen=True)
class BoundCurves:
    upper_dchoice_fixed_f: float
    upper_dchoice_whp: float
    lower_fixed_f: float
    upper_beta: float
    lower_beta: float
    one_choice_heavy: float
    weighted_scalar: float
    zeta: float


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    regressor: str


def gap_report(state: LoadMatrix) -> GapReport:
    n = state.n
    if state.is_real:
        per_dim = state.L.max(axis=1) - state.T / n
        sum_gap = float(state.R.max() - state.T.sum() / n)
    else:
        # n*max - total is an exact integer; divide once
        per_dim = (n * state.L.max(axis=1) - state.T) / n
        sum_gap = float(n * state.R.max() - state.T.sum()) / n
    count_gap = float(n * state.counts.max() - state.counts.sum()) / n
    per_dim = tuple(float(g) for g in per_dim)
    return GapReport(max(per_dim), per_dim, sum_gap, count_gap, state.t)


def bound_curves(config: AllocationConfig, zeta: float = 0.1) -> BoundCurves:
    """Each bound shape with unit leading constant.

    f is the mean ball load (f, f* = Dq or E[W]). The beta curves use the
    configured beta, or beta = 1 for processes that are not (1+beta)-choice.
    """
    n, D, m = config.n, config.D, config.m
    if n < 3:
        raise ConfigError("bound curves need n >= 3 (ln ln n must be positive)")
    if not zeta > 0:
        raise ConfigError("zeta must be > 0")
    f = config.source.mean_load(D)
    beta = config.process.beta if config.process.kind == "beta-choice" else 1.0
    lnn = math.log(n)
    lnln = math.log(lnn)
    return BoundCurves(
        upper_dchoice_fixed_f=lnln,
        upper_dchoice_whp=(m * f / (n * D)) ** (0.5 + zeta) * lnln,
        lower_fixed_f=f * lnln / D,
        upper_beta=lnn / beta,
        lower_beta=f * lnn / (D * beta),
        one_choice_heavy=m / n + math.sqrt(m * lnn / n),
        weighted_scalar=f * lnn,
        zeta=zeta,
    )


def chernoff_tail(mu: float, t: float) -> float:
    """Bound on Pr[X > mu + t] for a binomial X with mean mu."""
    if not (mu > 0 and t >= 0):
        raise ValueError("need mu > 0 and t >= 0")
    return math.exp((mu + t) * math.log(mu / (mu + t)) + t)


def _regressor(point, kind: str) -> float:
    n = point[0]
    if kind == "lnln":
        return math.log(math.log(n))
    if kind == "ln":
        return math.log(n)
    if kind == "sqrt_mlnn_over_n":
        if len(point) < 3:
            raise ValueError("sqrt_mlnn_over_n points need (n, gap, m)")
        m = point[2]
        return math.sqrt(m * math.log(n) / n)
    raise ValueError(f"unknown regressor {kind!r}; choose from {REGRESSORS}")


def fit_scaling(points, regressor: str = "lnln") -> ScalingFit:
    """OLS of gap against a growth term of n.

    ``points`` holds ``(n, gap)`` pairs, or ``(n, gap, m)`` for the
    one-choice heavy regressor.
    """
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    x = np.array([_regressor(p, regressor) for p in points])
    y = np.array([float(p[1]) for p in points])
    if np.ptp(x) == 0:
        raise np.linalg.LinAlgError("regressor values are all equal; fit is singular")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    # constant responses leave R^2 undefined
    r2 = float("nan") if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ScalingFit(float(slope), float(intercept), r2, regressor)
