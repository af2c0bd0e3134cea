"""Retrospective approximation for smooth stochastic optimization.

A sequence of sample-average problems with growing sample sizes is solved
by warm-started L-BFGS to shrinking gradient tolerances. SGD and Adam
baselines share the same work accounting.
"""

from .baselines import AdamConfig, SgdConfig, run_adam, run_sgd
from .driver import (
    OuterIterationRecord,
    RunTrace,
    WeightRule,
    measure_true_gradient,
    run_ra,
    weighted_average,
)
from .inner_solver import (
    InnerStatus,
    LineSearchParams,
    SolverConfig,
    SolverState,
    backtracking_search,
    solve_to_tolerance,
    two_loop_direction,
)
from .oracle import (
    SampleId,
    StochasticOracle,
    make_least_squares,
    make_logistic,
    make_nonconvex_test,
    make_quadratic,
)
from .sample_path import SampleSet, draw_sample_set, estimate_grad_norm_sigma, eval_sample_path
from .schedule import (
    RateCheckConfig,
    SampleSizeSchedule,
    ToleranceSchedule,
    check_summability,
    geometric_rate_bound,
    next_sample_size,
    next_tolerance,
)

__version__ = "0.1.0"
