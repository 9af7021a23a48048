"""Simulation of multidimensional balls-into-bins allocation processes."""

from .core import (
    AllocationConfig,
    BallSourceSpec,
    BallSpec,
    ConfigError,
    LoadMatrix,
    NormalizedState,
    WeightDist,
    apply_ball,
    derive_seed,
    generate_ball,
    normalize,
)
from .metrics import GapReport, bound_curves, chernoff_tail, fit_scaling, gap_report
from .potentials import (
    PotentialOverflow,
    PotentialParams,
    default_params,
    drift_estimate,
    equi_load_groups,
    gamma,
)
from .processes import (
    ProcessSpec,
    probability_vector,
    run_greedy_with_ties,
    run_parallel_rounds,
    run_sequential,
    run_trial,
    select_bin,
    simulate,
)
from .records import CheckpointRow, TrajectoryRecord

__version__ = "0.1.0"

__all__ = [
    "AllocationConfig",
    "BallSourceSpec",
    "BallSpec",
    "ConfigError",
    "LoadMatrix",
    "NormalizedState",
    "WeightDist",
    "apply_ball",
    "derive_seed",
    "generate_ball",
    "normalize",
    "PotentialOverflow",
    "PotentialParams",
    "default_params",
    "drift_estimate",
    "equi_load_groups",
    "gamma",
    "ProcessSpec",
    "probability_vector",
    "run_greedy_with_ties",
    "run_parallel_rounds",
    "run_sequential",
    "run_trial",
    "select_bin",
    "simulate",
    "GapReport",
    "bound_curves",
    "chernoff_tail",
    "fit_scaling",
    "gap_report",
    "CheckpointRow",
    "TrajectoryRecord",
]

