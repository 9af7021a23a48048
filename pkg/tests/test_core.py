import itertools
import math

import numpy as np
import pytest

from mdbins.core import (
    AllocationConfig,
    BallSourceSpec,
    BallSpec,
    ConfigError,
    LoadMatrix,
    WeightDist,
    apply_ball,
    default_checkpoints,
    derive_seed,
    draw_balls,
    generate_ball,
    normalize,
)
from mdbins.processes import ProcessSpec

N_DRAWS = 100_000


def test_fixed_f_all_dims_when_f_equals_D():
    rng = np.random.default_rng(0)
    src = BallSourceSpec("fixed-f-uniform", f=3)
    for _ in range(50):
        assert generate_ball(src, 3, rng).dims == (0, 1, 2)


def test_fixed_f_uniform_marginal():
    balls = draw_balls(BallSourceSpec("fixed-f-uniform", f=1), 4, np.random.default_rng(1), N_DRAWS)
    assert (balls.sum(axis=1) == 1).all()
    freq = balls.mean(axis=0)
    sigma = math.sqrt(0.25 * 0.75 / N_DRAWS)
    assert np.all(np.abs(freq - 0.25) <= 3 * sigma)


def test_fixed_f_uniform_subsets_equiprobable():
    D, f = 5, 2
    balls = draw_balls(BallSourceSpec("fixed-f-uniform", f=f), D, np.random.default_rng(2), N_DRAWS)
    subsets = list(itertools.combinations(range(D), f))
    keys = [tuple(np.flatnonzero(b)) for b in balls]
    counts = {s: 0 for s in subsets}
    for k in keys:
        counts[k] += 1
    tol = 4 * math.sqrt(0.09 / N_DRAWS)
    for s in subsets:
        assert abs(counts[s] / N_DRAWS - 0.1) <= tol


def test_binomial_mean_population():
    balls = draw_balls(BallSourceSpec("variable-f-binomial", q=0.5), 8, np.random.default_rng(3), N_DRAWS)
    sizes = balls.sum(axis=1)
    sigma = math.sqrt(8 * 0.25 / N_DRAWS)
    assert abs(sizes.mean() - 4) <= 3 * sigma
    # empty balls are legal
    assert (sizes == 0).any()


def test_nonuniform_successive_sampling():
    # first pick ~ w; second pick given first ~ w renormalized; marginal of dim 0
    w = (0.5, 0.3, 0.2)
    balls = draw_balls(BallSourceSpec("fixed-f-nonuniform", f=2, dim_weights=w), 3, np.random.default_rng(4), N_DRAWS)
    assert (balls.sum(axis=1) == 2).all()
    # dim 2 is excluded exactly when {0,1} is drawn: 0.5*0.3/0.5 + 0.3*0.5/0.7
    p01 = 0.5 * 0.6 + 0.3 * (0.5 / 0.7)
    got = (balls[:, 2] == 0).mean()
    assert abs(got - p01) <= 4 * math.sqrt(p01 * (1 - p01) / N_DRAWS)


def test_nonuniform_skips_zero_weight_dims():
    balls = draw_balls(BallSourceSpec("fixed-f-nonuniform", f=2, dim_weights=(0.5, 0.0, 0.5)), 3,
                       np.random.default_rng(5), 5000)
    assert (balls[:, 1] == 0).all()


def test_weighted_scalar_draws():
    src = BallSourceSpec("weighted-scalar", weight_dist=WeightDist.parse("exponential:2"))
    balls = draw_balls(src, 1, np.random.default_rng(6), N_DRAWS)
    assert balls.dtype == np.float64 and (balls > 0).all()
    assert abs(balls.mean() - 0.5) < 0.01
    ball = generate_ball(src, 1, np.random.default_rng(7))
    assert ball.dims == (0,) and ball.weight > 0


def test_apply_ball_updates_raw_and_normalized():
    st = LoadMatrix.empty(2, 2)
    apply_ball(st, 1, BallSpec((0,), (1,)))
    assert st.L.tolist() == [[0, 1], [0, 0]]
    assert st.T.tolist() == [1, 0]
    assert st.t == 1
    assert normalize(st).x[0].tolist() == [-0.5, 0.5]


def test_apply_empty_ball_only_counts():
    st = LoadMatrix.from_loads([[2, 1]])
    before = st.L.copy()
    apply_ball(st, 0, BallSpec((), ()))
    assert np.array_equal(st.L, before) and st.t == 1


def test_apply_ball_shifts_sum_load():
    n = 5
    st = LoadMatrix.from_loads(np.arange(3 * n).reshape(3, n))
    s0 = normalize(st).s.copy()
    apply_ball(st, 2, BallSpec((0, 1), (1, 1)))
    s1 = normalize(st).s
    assert s1[2] - s0[2] == pytest.approx(2 * (1 - 1 / n))
    others = [i for i in range(n) if i != 2]
    assert np.allclose(s1[others] - s0[others], -2 / n)


def test_normalize_examples():
    flat = normalize(LoadMatrix.from_loads([[3, 3, 3], [1, 1, 1]]))
    assert not flat.x.any() and not flat.s.any()
    assert flat.order.tolist() == [0, 1, 2]

    two = normalize(LoadMatrix.from_loads([[3, 1]]))
    assert two.x.tolist() == [[1, -1]] and two.s.tolist() == [1, -1]
    assert two.order.tolist() == [0, 1]

    # equal sums keep ascending bin order
    tie = normalize(LoadMatrix.from_loads([[4, 4, 0]]))
    assert tie.s.tolist() == pytest.approx([4 / 3, 4 / 3, -8 / 3])
    assert tie.order.tolist() == [0, 1, 2]
    tie2 = normalize(LoadMatrix.from_loads([[0, 6, 6]]))
    assert tie2.order.tolist() == [1, 2, 0]


def test_integer_zero_sum_is_exact():
    rng = np.random.default_rng(8)
    st = LoadMatrix.from_loads(rng.integers(0, 10**9, size=(4, 7)))
    ns = normalize(st)
    assert (ns.scaled_x.sum(axis=1) == 0).all()


def test_config_validation():
    src = BallSourceSpec("fixed-f-uniform", f=2)
    proc = ProcessSpec("d-choice", d=2)
    with pytest.raises(ConfigError):
        AllocationConfig(0, 1, 1, src, proc)
    with pytest.raises(ConfigError):
        AllocationConfig(4, 1, 1, src, proc)  # f > D
    with pytest.raises(ConfigError):
        AllocationConfig(4, 2, 10, src, proc, checkpoints=(5, 3))
    with pytest.raises(ConfigError):
        AllocationConfig(4, 2, 10, src, proc, checkpoints=(11,))
    with pytest.raises(ConfigError):
        AllocationConfig(4, 2, 10, BallSourceSpec("fixed-f-uniform", f=1, q=0.5), proc)
    with pytest.raises(ConfigError):
        AllocationConfig(4, 2, 10, BallSourceSpec("fixed-f-nonuniform", f=1, dim_weights=(0.5, 0.6)), proc)
    with pytest.raises(ConfigError):
        AllocationConfig(4, 2, 10, BallSourceSpec("weighted-scalar", weight_dist=WeightDist("constant", (1.0,))), proc)
    with pytest.raises(ConfigError):
        WeightDist.parse("pareto:1")


def test_default_checkpoints():
    assert default_checkpoints(4, 0) == (0,)
    assert default_checkpoints(4, 20) == (4, 8, 16, 20)
    assert default_checkpoints(4, 16) == (4, 8, 16)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 0, 0) == derive_seed(1, 0, 0)
    seeds = {derive_seed(1, p, t) for p in range(5) for t in range(50)}
    assert len(seeds) == 250
