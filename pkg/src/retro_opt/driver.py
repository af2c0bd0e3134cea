"""The retrospective-approximation outer loop.

Each outer iteration ``k`` draws a fresh sample set of size ``M_k``, fixes a
tolerance ``eps_k`` from information available before the solve, runs the
inner solver from the current averaged iterate, and folds the new solution
into the weighted average. Everything random is derived from
``(seed, k, purpose)`` so a run can be replayed exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .inner_solver import SolverConfig, SolverState, solve_to_tolerance
from .oracle import StochasticOracle
from .sample_path import SamplePathProblem, SampleSet, draw_sample_set
from .schedule import (
    SampleSizeSchedule,
    ToleranceCache,
    ToleranceSchedule,
    next_sample_size,
    next_tolerance,
)

__all__ = [
    "WeightRule",
    "OuterIterationRecord",
    "RunTrace",
    "weighted_average",
    "measure_true_gradient",
    "run_ra",
    "stream_rng",
    "regenerate_sample_sets",
    "verify_tolerance_certificate",
    "replay_work",
    "fingerprint",
]

_DRAW, _SIGMA = 0, 1
_EVAL_STREAM_BIT = 1 << 63


def stream_rng(seed: int, k: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k), int(purpose)]))


def fingerprint(obj) -> str:
    """Short SHA-256 of a JSON rendering of ``obj``."""
    if dataclasses.is_dataclass(obj):
        obj = dataclasses.asdict(obj)
    text = json.dumps(obj, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class WeightRule:
    kind: str = "last_iterate"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("last_iterate", "uniform", "custom"):
            raise ValueError(f"unknown weight rule {self.kind!r}")
        if self.kind == "custom":
            if not self.values or any(not v > 0 for v in self.values):
                raise ValueError("custom weights must be a non-empty list of positive reals")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def weights_for(self, k: int) -> np.ndarray:
        if self.kind == "last_iterate":
            w = np.zeros(k)
            w[-1] = 1.0
            return w
        if self.kind == "uniform":
            return np.ones(k)
        if k > len(self.values):
            raise ValueError(f"custom weights cover only {len(self.values)} iterations")
        return np.array(self.values[:k])


def weighted_average(points, weights) -> np.ndarray:
    """``sum_j w_j x_j / sum_j w_j``."""
    pts = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] != w.size or w.size < 1:
        raise ValueError("need one weight per point and at least one point")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    return (w @ pts) / w.sum()


@dataclass
class OuterIterationRecord:
    """Metrics for one outer iteration (or one baseline evaluation point).

    ``grad_calls``/``value_calls`` count full sample-path evaluations with and
    without gradients; ``sigma_evals`` counts per-sample evaluations spent on
    the tolerance estimate. Together with ``M_k`` they determine the work
    counters exactly.
    """

    k: int
    M_k: int
    eps_k: float
    inner_iterations: int
    grad_norm_sample_path: float
    grad_norm_true: float | None
    loss_true: float | None
    cumulative_oracle_work: int
    cumulative_gradient_evals: int
    wall_time_ms: float
    inner_status: str
    grad_calls: int = 0
    value_calls: int = 0
    sigma_evals: int = 0


@dataclass
class RunTrace:
    records: list[OuterIterationRecord]
    final_x: np.ndarray
    config_fingerprint: str
    seed: int
    algorithm: str = "ra"
    iterates: list[np.ndarray] = field(default_factory=list)
    warm_starts: list[np.ndarray] = field(default_factory=list)
    events: list[tuple[str, int]] = field(default_factory=list)
    solver_events: list[str] = field(default_factory=list)


def measure_true_gradient(
    oracle: StochasticOracle, x, M_eval: int = 10_000, eval_seed: int = 0
) -> tuple[float, float]:
    """Loss and gradient norm of the objective, for reporting only.

    Finite datasets use every row. Streaming oracles average ``M_eval`` draws
    from an evaluation stream that never overlaps optimization streams.
    Nothing is charged to the work counters.
    """
    if M_eval < 1:
        raise ValueError("M_eval must be >= 1")
    x = oracle.check_point(x)
    if oracle.n_samples is not None:
        loss, grad = oracle.full_data(x)
        return loss, float(np.linalg.norm(grad))
    stream = _EVAL_STREAM_BIT | (int(eval_seed) & (_EVAL_STREAM_BIT - 1))
    sset = SampleSet(stream, np.arange(M_eval, dtype=np.uint64), 0)
    ev = SamplePathProblem(oracle, sset, workers=1, charge=False).evaluate(x)
    return ev.value, ev.grad_norm


def run_ra(
    oracle: StochasticOracle,
    x0,
    sched: SampleSizeSchedule,
    tol: ToleranceSchedule,
    weights: WeightRule | None = None,
    solver_cfg: SolverConfig | None = None,
    K: int = 10,
    seed: int = 0,
    *,
    warm_start: bool = True,
    carry_memory: bool = True,
    nested: bool = False,
    track_true: bool = True,
    eval_samples: int = 10_000,
    eval_seed: int | None = None,
    workers: int | None = None,
    record_wall_time: bool = False,
    config_fingerprint: str | None = None,
) -> RunTrace:
    """Run ``K`` outer iterations of retrospective approximation.

    Parameters
    ----------
    warm_start
        Start each inner solve from the averaged iterate (otherwise from
        ``x0``).
    carry_memory
        Keep L-BFGS curvature pairs across outer iterations.
    nested
        Grow the previous sample set instead of drawing a fresh one.
    track_true
        Record loss and gradient norm of the true objective at each ``X_k``
        (see :func:`measure_true_gradient`).
    record_wall_time
        Store elapsed milliseconds; off by default so traces are
        reproducible byte for byte.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    x0 = oracle.check_point(x0).copy()
    weights = weights or WeightRule()
    solver_cfg = solver_cfg or SolverConfig()
    eval_seed = seed if eval_seed is None else eval_seed
    if config_fingerprint is None:
        config_fingerprint = fingerprint(
            {"sched": sched, "tol": tol, "weights": weights, "solver": solver_cfg, "K": K,
             "warm_start": warm_start, "carry_memory": carry_memory, "nested": nested}
        )

    state = SolverState(x0, solver_cfg.memory)
    cache = ToleranceCache()
    work0, grads0 = oracle.counter.snapshot()
    trace = RunTrace([], x0.copy(), config_fingerprint, int(seed))
    x_bar = x0.copy()
    M_prev = None
    prev_set = None
    t_start = time.perf_counter()

    for k in range(1, K + 1):
        M_k = next_sample_size(sched, k, M_prev)
        sset = draw_sample_set(oracle, M_k, k, stream_rng(seed, k, _DRAW), prev_set if nested else None)
        trace.events.append(("draw", k))

        before_tol = oracle.counter.snapshot()[0]
        eps_k = next_tolerance(tol, k, M_k, x_bar, sset, oracle, cache=cache, rng=stream_rng(seed, k, _SIGMA))
        sigma_evals = oracle.counter.snapshot()[0] - before_tol
        trace.events.append(("tolerance", k))

        start = x_bar if warm_start else x0
        trace.warm_starts.append(start.copy())
        state.x_current = start.copy()
        if not carry_memory:
            state.reset_memory()
        problem = SamplePathProblem(oracle, sset, workers)
        result = solve_to_tolerance(problem, state, eps_k, solver_cfg)
        trace.events.append(("solve", k))

        trace.iterates.append(result.x_out.copy())
        x_bar = weighted_average(trace.iterates, weights.weights_for(k))

        work, grads = oracle.counter.snapshot()
        loss_true = grad_true = None
        if track_true:
            loss_true, grad_true = measure_true_gradient(oracle, result.x_out, eval_samples, eval_seed)
        elapsed = (time.perf_counter() - t_start) * 1e3 if record_wall_time else 0.0
        trace.records.append(
            OuterIterationRecord(
                k=k,
                M_k=M_k,
                eps_k=eps_k,
                inner_iterations=result.inner_iterations,
                grad_norm_sample_path=result.grad_norm_out,
                grad_norm_true=grad_true,
                loss_true=loss_true,
                cumulative_oracle_work=work - work0,
                cumulative_gradient_evals=grads - grads0,
                wall_time_ms=elapsed,
                inner_status=result.status.value,
                grad_calls=result.grad_calls,
                value_calls=result.value_calls,
                sigma_evals=sigma_evals,
            )
        )
        M_prev, prev_set = M_k, sset

    trace.final_x = x_bar.copy()
    trace.solver_events = list(state.events)
    return trace


def regenerate_sample_sets(oracle: StochasticOracle, trace: RunTrace, nested: bool = False):
    """Rebuild the sample set of every record from the trace seed."""
    prev = None
    for rec in trace.records:
        sset = draw_sample_set(oracle, rec.M_k, rec.k, stream_rng(trace.seed, rec.k, _DRAW),
                               prev if nested else None)
        yield sset
        prev = sset


def verify_tolerance_certificate(
    oracle: StochasticOracle, trace: RunTrace, nested: bool = False
) -> list[tuple[int, bool, float]]:
    """Re-evaluate ``||grad f_{M_k}(X_k)||`` for every converged record.

    Returns ``(k, holds, recomputed_norm)`` triples; no work is charged.
    """
    out = []
    for rec, sset, x_k in zip(trace.records, regenerate_sample_sets(oracle, trace, nested), trace.iterates):
        if rec.inner_status != "converged":
            continue
        ev = SamplePathProblem(oracle, sset, workers=1, charge=False).evaluate(x_k)
        out.append((rec.k, ev.grad_norm <= rec.eps_k, ev.grad_norm))
    return out


def replay_work(records) -> list[tuple[int, int]]:
    """Cumulative ``(oracle_work, gradient_evals)`` implied by the record fields."""
    work = grads = 0
    out = []
    for rec in records:
        work += rec.M_k * (rec.grad_calls + rec.value_calls) + rec.sigma_evals
        grads += rec.M_k * rec.grad_calls + rec.sigma_evals
        out.append((work, grads))
    return out

