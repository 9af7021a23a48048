"""Allocation state, ball generation and the raw-load update.

Loads are stored raw (cumulative per dimension and bin). The normalized view
``x = L - T/n`` used by the potentials is derived on demand, which keeps the
per-dimension zero-sum property exact for integer loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .processes import ProcessSpec

SOURCE_VARIANTS = (
    "fixed-f-uniform",
    "fixed-f-nonuniform",
    "variable-f-binomial",
    "weighted-scalar",
)
WEIGHT_KINDS = ("constant", "uniform", "exponential")

REAL_RTOL = 1e-9


class ConfigError(ValueError):
    """Invalid allocation, source, process or potential configuration."""


@dataclass(frozen=True)
class WeightDist:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigError(f"unknown weight distribution {self.kind!r}")
        want = {"constant": 1, "uniform": 2, "exponential": 1}[self.kind]
        if len(self.params) != want:
            raise ConfigError(f"{self.kind} weights take {want} parameter(s), got {len(self.params)}")
        if self.kind == "constant" and not self.params[0] > 0:
            raise ConfigError("constant weight must be > 0")
        if self.kind == "uniform":
            a, b = self.params
            if not 0 <= a < b:
                raise ConfigError("uniform weights need 0 <= a < b")
        if self.kind == "exponential" and not self.params[0] > 0:
            raise ConfigError("exponential rate must be > 0")

    @classmethod
    def parse(cls, text: str) -> "WeightDist":
        """Parse ``constant:1``, ``uniform:0.5,1.5`` or ``exponential:2``."""
        kind, _, rest = text.partition(":")
        try:
            params = tuple(float(v) for v in rest.split(",")) if rest else ()
        except ValueError as exc:
            raise ConfigError(f"bad weight distribution {text!r}") from exc
        return cls(kind.strip(), params)

    def __str__(self):
        return f"{self.kind}:" + ",".join(repr(p) for p in self.params)

    @property
    def mean(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        return 1.0 / self.params[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.params[0])
        if self.kind == "uniform":
            # strictly positive weights; a == 0 is allowed but measure-zero
            return rng.uniform(self.params[0], self.params[1], size)
        return rng.exponential(1.0 / self.params[0], size)


@dataclass(frozen=True)
class BallSourceSpec:
    """How balls are drawn. Only the fields of the chosen variant may be set."""

    variant: str
    f: int | None = None
    dim_weights: tuple[float, ...] | None = None
    q: float | None = None
    weight_dist: WeightDist | None = None

    @property
    def is_real(self) -> bool:
        return self.variant == "weighted-scalar"

    def mean_load(self, D: int) -> float:
        """Expected total weight of one ball (f, or f* = Dq, or E[W])."""
        if self.variant in ("fixed-f-uniform", "fixed-f-nonuniform"):
            return float(self.f)
        if self.variant == "variable-f-binomial":
            return D * self.q
        return self.weight_dist.mean

    def validate(self, D: int) -> None:
        if self.variant not in SOURCE_VARIANTS:
            raise ConfigError(f"unknown source variant {self.variant!r}")
        allowed = {
            "fixed-f-uniform": {"f"},
            "fixed-f-nonuniform": {"f", "dim_weights"},
            "variable-f-binomial": {"q"},
            "weighted-scalar": {"weight_dist"},
        }[self.variant]
        present = {k for k in ("f", "dim_weights", "q", "weight_dist") if getattr(self, k) is not None}
        if present != allowed:
            missing = sorted(allowed - present)
            extra = sorted(present - allowed)
            raise ConfigError(
                f"source {self.variant}: missing {missing or 'nothing'}, unexpected {extra or 'nothing'}"
            )
        if self.variant.startswith("fixed-f"):
            if not (isinstance(self.f, (int, np.integer)) and 1 <= self.f <= D):
                raise ConfigError(f"need 1 <= f <= D, got f={self.f}, D={D}")
        if self.variant == "fixed-f-nonuniform":
            w = np.asarray(self.dim_weights, dtype=float)
            if w.shape != (D,):
                raise ConfigError(f"dim_weights must have D={D} entries")
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("dim_weights must be >= 0 and sum to 1")
            if np.count_nonzero(w) < self.f:
                raise ConfigError("fewer positive dim_weights than f")
        if self.variant == "variable-f-binomial" and not (0 < self.q <= 1):
            raise ConfigError(f"need 0 < q <= 1, got {self.q}")
        if self.variant == "weighted-scalar" and D != 1:
            raise ConfigError("weighted-scalar balls require D = 1")


@dataclass(frozen=True)
class BallSpec:
    dims: tuple[int, ...]
    weights: tuple[float, ...]

    @property
    def weight(self) -> float:
        return sum(self.weights)


@dataclass(frozen=True)
class AllocationConfig:
    n: int
    D: int
    m: int
    source: BallSourceSpec
    process: "ProcessSpec"
    seed: int = 0
    checkpoints: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n < 1 or self.D < 1 or self.m < 0:
            raise ConfigError(f"need n >= 1, D >= 1, m >= 0 (got n={self.n}, D={self.D}, m={self.m})")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.source.validate(self.D)
        self.process.validate(self.n)
        if self.checkpoints is None:
            object.__setattr__(self, "checkpoints", default_checkpoints(self.n, self.m))
        else:
            cps = tuple(int(c) for c in self.checkpoints)
            if list(cps) != sorted(set(cps)) or (cps and (cps[0] < 0 or cps[-1] > self.m)):
                raise ConfigError("checkpoints must be strictly ascending within [0, m]")
            object.__setattr__(self, "checkpoints", cps)


def default_checkpoints(n: int, m: int) -> tuple[int, ...]:
    """n, 2n, 4n, ... up to m, plus m itself."""
    cps = []
    c = n
    while c < m:
        cps.append(c)
        c *= 2
    cps.append(m)
    return tuple(cps)


@dataclass
class LoadMatrix:
    """Raw loads ``L[d, i]``, per-dimension totals ``T``, per-bin sums ``R``.

    ``counts`` holds the number of balls (copies, for greedy-with-ties) per
    bin and ``t`` the number of balls processed.
    """

    L: np.ndarray
    T: np.ndarray
    R: np.ndarray
    counts: np.ndarray
    t: int = 0

    @classmethod
    def empty(cls, n: int, D: int, real: bool = False) -> "LoadMatrix":
        dt = np.float64 if real else np.int64
        return cls(np.zeros((D, n), dt), np.zeros(D, dt), np.zeros(n, dt), np.zeros(n, np.int64), 0)

    @classmethod
    def from_loads(cls, L, counts=None, t: int = 0) -> "LoadMatrix":
        """Build a state from an explicit ``D x n`` load matrix (tests, oracle).

        ``counts`` defaults to zeros, so ball-count gaps are only meaningful
        when it is supplied.
        """
        L = np.array(L)
        L = L.astype(np.float64 if L.dtype.kind == "f" else np.int64)
        if L.ndim != 2:
            raise ValueError("loads must be a D x n matrix")
        n = L.shape[1]
        c = np.zeros(n, np.int64) if counts is None else np.asarray(counts, np.int64)
        return cls(L, L.sum(axis=1), L.sum(axis=0), c, t)

    @property
    def n(self) -> int:
        return self.L.shape[1]

    @property
    def D(self) -> int:
        return self.L.shape[0]

    @property
    def is_real(self) -> bool:
        return self.L.dtype.kind == "f"

    def copy(self) -> "LoadMatrix":
        return LoadMatrix(self.L.copy(), self.T.copy(), self.R.copy(), self.counts.copy(), self.t)

    def key(self) -> tuple:
        """Hashable canonical form: the labelled load matrix itself."""
        return tuple(tuple(row) for row in self.L.tolist())

    def check(self) -> None:
        """Raise AssertionError if the bookkeeping invariants are broken."""
        if self.is_real:
            scale = max(1.0, float(np.abs(self.T).max(initial=0.0)))
            assert np.allclose(self.L.sum(axis=1), self.T, rtol=REAL_RTOL, atol=REAL_RTOL * scale)
            assert np.allclose(self.L.sum(axis=0), self.R, rtol=REAL_RTOL, atol=REAL_RTOL * scale)
        else:
            assert np.array_equal(self.L.sum(axis=1), self.T)
            assert np.array_equal(self.L.sum(axis=0), self.R)
        assert (self.L >= 0).all()


@dataclass
class NormalizedState:
    x: np.ndarray
    s: np.ndarray
    order: np.ndarray
    scaled_x: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def sorted_s(self) -> np.ndarray:
        return self.s[self.order]


def apply_ball(state: LoadMatrix, bin: int, ball: BallSpec) -> None:
    for d, w in zip(ball.dims, ball.weights):
        state.L[d, bin] += w
        state.T[d] += w
        state.R[bin] += w
    state.counts[bin] += 1
    state.t += 1


def normalize(state: LoadMatrix) -> NormalizedState:
    """Centered loads ``x``, per-bin sums ``s`` and the rank order of bins.

    ``order`` lists bins by ``s`` descending, ties by ascending bin index.
    """
    n = state.n
    total = state.T.sum()
    if state.is_real:
        x = state.L - state.T[:, None] / n
        s = state.R - total / n
        order = np.lexsort((np.arange(n), -s))
        return NormalizedState(x, s, order)
    # integer path: rank and zero-sum exactness come from n*L - T
    scaled_x = n * state.L - state.T[:, None]
    scaled_s = n * state.R - total
    order = np.lexsort((np.arange(n), -scaled_s))
    return NormalizedState(scaled_x / n, scaled_s / n, order, scaled_x)


def derive_seed(root: int, *keys: int) -> int:
    """Independent 64-bit seed for (root, keys...), stable under reordering of work."""
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Separate streams for balls, bin samples and (1+beta) coins of one trial."""
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3))


def draw_balls(source: BallSourceSpec, D: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` balls as a ``count x D`` matrix of per-dimension weights."""
    if source.variant == "fixed-f-uniform":
        f = source.f
        # partial Fisher-Yates on every row at once
        perm = np.tile(np.arange(D), (count, 1))
        rows = np.arange(count)
        for k in range(f):
            j = rng.integers(k, D, size=count)
            perm[rows, k], perm[rows, j] = perm[rows, j], perm[rows, k].copy()
        balls = np.zeros((count, D), np.int64)
        balls[rows[:, None], perm[:, :f]] = 1
        return balls
    if source.variant == "fixed-f-nonuniform":
        w = np.asarray(source.dim_weights, dtype=float)
        remaining = np.tile(w, (count, 1))
        balls = np.zeros((count, D), np.int64)
        rows = np.arange(count)
        u = rng.random((count, source.f))
        for k in range(source.f):
            cum = np.cumsum(remaining, axis=1)
            target = u[:, k] * cum[:, -1]
            pick = (cum > target[:, None]).argmax(axis=1)
            balls[rows, pick] = 1
            remaining[rows, pick] = 0.0
        return balls
    if source.variant == "variable-f-binomial":
        return (rng.random((count, D)) < source.q).astype(np.int64)
    if source.variant == "weighted-scalar":
        return source.weight_dist.sample(rng, count).reshape(count, 1).astype(np.float64)
    raise ConfigError(f"unknown source variant {source.variant!r}")


def ball_from_row(row: np.ndarray) -> BallSpec:
    dims = tuple(int(d) for d in np.flatnonzero(row))
    return BallSpec(dims, tuple(row[d].item() for d in dims))


def generate_ball(source: BallSourceSpec, D: int, rng: np.random.Generator) -> BallSpec:
    return ball_from_row(draw_balls(source, D, rng, 1)[0])


def loads_equal(a: LoadMatrix, b: LoadMatrix) -> bool:
    if a.is_real or b.is_real:
        return bool(np.allclose(a.L, b.L, rtol=REAL_RTOL))
    return bool(np.array_equal(a.L, b.L))

