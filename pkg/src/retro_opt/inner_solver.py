"""L-BFGS with backtracking Armijo line search, solved to a gradient tolerance.

The curvature memory lives in :class:`SolverState` and is meant to outlive a
single call to :func:`solve_to_tolerance`, so consecutive sample-path
problems share it.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .sample_path import SamplePathProblem

__all__ = [
    "InnerStatus",
    "LineSearchError",
    "CurvaturePair",
    "LineSearchParams",
    "SolverConfig",
    "SolverState",
    "StepRecord",
    "InnerResult",
    "two_loop_direction",
    "backtracking_search",
    "solve_to_tolerance",
    "CURVATURE_THRESHOLD",
]

CURVATURE_THRESHOLD = 1e-10


class InnerStatus(str, enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration-cap"
    LINE_SEARCH_FAILURE = "line-search-failure"


class LineSearchError(RuntimeError):
    """No step in the backtracking sequence satisfied the Armijo condition."""


@dataclass(frozen=True)
class CurvaturePair:
    s: np.ndarray
    y: np.ndarray
    rho: float


@dataclass(frozen=True)
class LineSearchParams:
    c_armijo: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0.0 < self.c_armijo < 1.0:
            raise ValueError("c_armijo must lie in (0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Inner-solver settings.

    ``inner_cap=None`` means ``200 * d`` iterations. ``method="gd"`` swaps the
    quasi-Newton direction for steepest descent. With
    ``line_search_gradients`` the trial points of the line search are
    evaluated with gradients (the accepted one is reused); otherwise trials
    are function-only and the gradient is computed once per accepted step.
    """

    memory: int = 10
    line_search: LineSearchParams = field(default_factory=LineSearchParams)
    inner_cap: int | None = None
    method: str = "lbfgs"
    line_search_gradients: bool = True

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be positive")
        if self.method not in ("lbfgs", "gd"):
            raise ValueError(f"unknown inner method {self.method!r}")
        if self.inner_cap is not None and self.inner_cap < 1:
            raise ValueError("inner_cap must be positive")

    def cap_for(self, d: int) -> int:
        return self.inner_cap if self.inner_cap is not None else 200 * d


class SolverState:
    """Current iterate plus a bounded, oldest-out deque of curvature pairs."""

    def __init__(self, x0, memory: int = 10):
        self.x_current = np.array(x0, dtype=np.float64)
        self.last_gradient: np.ndarray | None = None
        self.memory: deque[CurvaturePair] = deque(maxlen=int(memory))
        self.events: list[str] = []

    @property
    def capacity(self) -> int:
        return self.memory.maxlen

    def push_pair(self, s, y) -> bool:
        """Store ``(s, y)`` if ``y^T s > 1e-10 ||s|| ||y||``; report acceptance."""
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(over="ignore", invalid="ignore"):
            sy = float(s @ y)
            bound = CURVATURE_THRESHOLD * np.linalg.norm(s) * np.linalg.norm(y)
        if not np.isfinite(sy) or sy <= bound:
            return False
        self.memory.append(CurvaturePair(s.copy(), y.copy(), 1.0 / sy))
        return True

    def reset_memory(self) -> None:
        self.memory.clear()


def two_loop_direction(state: SolverState, g) -> np.ndarray:
    """``-H g`` for the implicit L-BFGS inverse Hessian held in ``state``.

    The initial matrix is ``gamma I`` with ``gamma = s^T y / y^T y`` from the
    newest pair (``gamma = 1`` with no pairs). A non-finite result resets the
    memory and returns ``-g``; a non-descent result returns ``-g`` and keeps
    the memory. Both cases log an event on ``state.events``.
    """
    g = np.asarray(g, dtype=np.float64)
    if not state.memory:
        return -g
    q = g.copy()
    alphas = []
    for pair in reversed(state.memory):
        a = pair.rho * (pair.s @ q)
        q -= a * pair.y
        alphas.append(a)
    newest = state.memory[-1]
    r = (newest.s @ newest.y) / (newest.y @ newest.y) * q
    for pair, a in zip(state.memory, reversed(alphas)):
        b = pair.rho * (pair.y @ r)
        r += (a - b) * pair.s
    p = -r
    if not np.all(np.isfinite(p)):
        state.events.append("non-finite two-loop direction; memory reset")
        state.reset_memory()
        return -g
    if p @ g >= 0:
        state.events.append("non-descent two-loop direction; steepest descent used")
        return -g
    return p


def backtracking_search(f_eval, x, p, g, params: LineSearchParams, f0: float | None = None) -> float:
    """Largest ``initial_step * factor**j`` meeting the Armijo condition.

    ``f_eval`` maps a point to the objective value. Raises
    :class:`LineSearchError` once ``max_backtracks`` reductions are spent.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    slope = float(np.asarray(g) @ p)
    if not slope < 0:
        raise ValueError("p is not a descent direction")
    if f0 is None:
        f0 = f_eval(x)
    step = params.initial_step
    for _ in range(params.max_backtracks + 1):
        if f_eval(x + step * p) <= f0 + params.c_armijo * step * slope:
            return step
        step *= params.backtrack_factor
    raise LineSearchError(f"Armijo condition not met after {params.max_backtracks} backtracks")


@dataclass(frozen=True)
class StepRecord:
    """One accepted step, with enough to re-check the Armijo condition."""

    f_before: float
    f_after: float
    step: float
    slope: float
    c_armijo: float
    steepest: bool

    def armijo_holds(self) -> bool:
        return self.f_after <= self.f_before + self.c_armijo * self.step * self.slope


@dataclass
class InnerResult:
    x_out: np.ndarray
    grad_norm_out: float
    inner_iterations: int
    status: InnerStatus
    value_out: float
    x_start: np.ndarray
    grad_calls: int = 0
    value_calls: int = 0
    steps: list[StepRecord] = field(default_factory=list)
    pairs_added: int = 0


def solve_to_tolerance(
    problem: SamplePathProblem,
    state: SolverState,
    epsilon: float,
    config: SolverConfig | None = None,
) -> InnerResult:
    """Run L-BFGS from ``state.x_current`` until ``||grad f_M|| <= epsilon``.

    The tolerance test precedes every step, so a feasible start costs exactly
    one gradient evaluation. Line-search failure and the iteration cap end
    the solve early with the corresponding status. ``state`` is updated in
    place; its memory is left intact for the next call.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    config = config or SolverConfig()
    params = config.line_search
    x = problem.oracle.check_point(state.x_current).copy()
    x_start = x.copy()
    grad_before, value_before = problem.grad_calls, problem.value_calls

    cur = problem.evaluate(x)
    cap = config.cap_for(problem.dimension)
    steps: list[StepRecord] = []
    pairs_added = 0
    status = InnerStatus.ITERATION_CAP

    for _ in range(cap + 1):
        if cur.grad_norm <= epsilon:
            status = InnerStatus.CONVERGED
            break
        if len(steps) == cap:
            break
        g = cur.gradient
        p = -g if config.method == "gd" else two_loop_direction(state, g)
        steepest = config.method == "gd" or bool(np.array_equal(p, -g))

        trial = {}

        def f_eval(z):
            if config.line_search_gradients:
                ev = problem.evaluate(z)
                trial["eval"] = ev
                return ev.value
            return problem.value(z)

        try:
            step = backtracking_search(f_eval, x, p, g, params, f0=cur.value)
        except LineSearchError:
            state.events.append("line-search failure")
            status = InnerStatus.LINE_SEARCH_FAILURE
            break
        x_new = x + step * p
        new = trial["eval"] if config.line_search_gradients else problem.evaluate(x_new)
        steps.append(StepRecord(cur.value, new.value, step, float(g @ p), params.c_armijo, steepest))
        if state.push_pair(x_new - x, new.gradient - g):
            pairs_added += 1
        x, cur = x_new, new

    state.x_current = x.copy()
    state.last_gradient = cur.gradient.copy()
    return InnerResult(
        x_out=x,
        grad_norm_out=cur.grad_norm,
        inner_iterations=len(steps),
        status=status,
        value_out=cur.value,
        x_start=x_start,
        grad_calls=problem.grad_calls - grad_before,
        value_calls=problem.value_calls - value_before,
        steps=steps,
        pairs_added=pairs_added,
    )
