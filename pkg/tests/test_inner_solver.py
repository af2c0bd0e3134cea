import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retro_opt.inner_solver import (
    CurvaturePair,
    InnerStatus,
    LineSearchError,
    LineSearchParams,
    SolverConfig,
    SolverState,
    backtracking_search,
    solve_to_tolerance,
    two_loop_direction,
)
from retro_opt.oracle import make_least_squares, make_quadratic
from retro_opt.sample_path import SamplePathProblem, SampleSet, draw_sample_set


def quadratic_problem(A, center=None):
    orc = make_quadratic(np.asarray(A, float), center)
    return SamplePathProblem(orc, SampleSet(1, [0], 1))


def random_spd(d, seed, cond=100.0):
    g = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(g.standard_normal((d, d)))
    eig = np.geomspace(1.0, cond, d)
    A = Q @ np.diag(eig) @ Q.T
    return 0.5 * (A + A.T)


# -- two-loop recursion ---------------------------------------------------------


def test_empty_memory_gives_steepest_descent():
    state = SolverState(np.zeros(3))
    g = np.array([0.1, -2.0, 3.5])
    p = two_loop_direction(state, g)
    np.testing.assert_array_equal(p, -g)


def test_single_pair_hand_computed():
    state = SolverState(np.zeros(2))
    assert state.push_pair([1.0, 0.0], [2.0, 0.0])
    p = two_loop_direction(state, np.array([1.0, 1.0]))
    np.testing.assert_allclose(p, [-0.5, -0.5], atol=1e-15)


def test_conjugate_pairs_reproduce_newton_direction():
    d = 5
    A = random_spd(d, 0)
    _, V = np.linalg.eigh(A)  # eigenvectors are A-conjugate
    state = SolverState(np.zeros(d), memory=d)
    for j in range(d):
        assert state.push_pair(V[:, j], A @ V[:, j])
    g = np.random.default_rng(1).standard_normal(d)
    p = two_loop_direction(state, g)
    np.testing.assert_allclose(p, -np.linalg.solve(A, g), atol=1e-8)


def test_curvature_filter_rejects_flat_or_negative_pairs():
    state = SolverState(np.zeros(2))
    assert not state.push_pair([1.0, 0.0], [-1.0, 0.0])
    assert not state.push_pair([1.0, 0.0], [0.0, 1.0])
    assert not state.push_pair([1e200, 0.0], [1e200, 0.0])
    assert len(state.memory) == 0


def test_memory_evicts_oldest():
    state = SolverState(np.zeros(1), memory=2)
    for k in range(1, 4):
        state.push_pair([float(k)], [1.0])
    assert [p.s[0] for p in state.memory] == [2.0, 3.0]


def test_non_finite_direction_resets_memory():
    state = SolverState(np.zeros(2))
    state.memory.append(CurvaturePair(np.array([np.nan, 0.0]), np.array([1.0, 0.0]), 1.0))
    g = np.array([1.0, 2.0])
    np.testing.assert_array_equal(two_loop_direction(state, g), -g)
    assert len(state.memory) == 0
    assert state.events


def test_non_descent_direction_falls_back_but_keeps_memory():
    state = SolverState(np.zeros(2))
    state.memory.append(CurvaturePair(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), -1.0))
    g = np.array([1.0, 0.0])
    np.testing.assert_array_equal(two_loop_direction(state, g), -g)
    assert len(state.memory) == 1
    assert state.events


# -- line search ------------------------------------------------------------------


def test_backtracking_halves_until_armijo():
    trials = []

    def f(z):
        trials.append(float(z[0]))
        return float(z[0] ** 2)

    params = LineSearchParams(initial_step=4.0)
    step = backtracking_search(f, np.array([1.0]), np.array([-1.0]), np.array([2.0]), params, f0=1.0)
    assert step == 1.0
    assert trials == [-3.0, -1.0, 0.0]


def test_linear_objective_takes_initial_step():
    step = backtracking_search(lambda z: -float(z[0]), np.zeros(1), np.ones(1), -np.ones(1), LineSearchParams())
    assert step == 1.0


def test_line_search_gives_up():
    calls = []

    def f(z):
        calls.append(1)
        return 10.0

    with pytest.raises(LineSearchError):
        backtracking_search(f, np.zeros(1), np.ones(1), -np.ones(1), LineSearchParams(max_backtracks=3), f0=0.0)
    assert len(calls) == 4


def test_line_search_rejects_ascent_direction():
    with pytest.raises(ValueError):
        backtracking_search(lambda z: 0.0, np.zeros(1), np.ones(1), np.ones(1), LineSearchParams())


def test_line_search_params_validation():
    for bad in (dict(c_armijo=0.0), dict(c_armijo=1.0), dict(backtrack_factor=1.0),
                dict(initial_step=0.0), dict(max_backtracks=0)):
        with pytest.raises(ValueError):
            LineSearchParams(**bad)


# -- solve to tolerance ---------------------------------------------------------


def test_start_at_minimizer_costs_one_gradient():
    prob = quadratic_problem(np.eye(2), center=[1.0, -1.0])
    state = SolverState([1.0, -1.0])
    res = solve_to_tolerance(prob, state, 1e-8)
    assert res.status is InnerStatus.CONVERGED
    assert res.inner_iterations == 0
    assert res.grad_calls == 1


def test_loose_tolerance_costs_one_gradient():
    prob = quadratic_problem(np.diag([1.0, 10.0]))
    res = solve_to_tolerance(prob, SolverState([1.0, 1.0]), 100.0)
    assert res.inner_iterations == 0
    assert res.grad_calls == 1
    np.testing.assert_array_equal(res.x_out, [1.0, 1.0])


def test_two_dimensional_quadratic_converges_quickly():
    prob = quadratic_problem(np.diag([1.0, 10.0]))
    res = solve_to_tolerance(prob, SolverState([1.0, 1.0]), 1e-8)
    assert res.status is InnerStatus.CONVERGED
    assert res.grad_norm_out <= 1e-8
    assert res.inner_iterations <= 30


def test_least_squares_solution_matches_direct_solve():
    orc = make_least_squares(5, 400, seed=3)
    s = draw_sample_set(orc, 400, 1, np.random.default_rng(0))
    prob = SamplePathProblem(orc, s)
    res = solve_to_tolerance(prob, SolverState(np.zeros(5)), 1e-9)
    uniq, counts = s.multiplicities
    X, y = orc.covariates[uniq.astype(int)], orc.responses[uniq.astype(int)]
    W = counts[:, None]
    beta = np.linalg.solve(X.T @ (W * X), X.T @ (counts * y))
    np.testing.assert_allclose(res.x_out, beta, atol=1e-8)


def test_state_is_updated_and_memory_survives():
    A = random_spd(4, 2)
    prob = quadratic_problem(A)
    state = SolverState(np.ones(4), memory=3)
    res = solve_to_tolerance(prob, state, 1e-6)
    np.testing.assert_array_equal(state.x_current, res.x_out)
    np.testing.assert_array_equal(state.last_gradient, prob.evaluate(res.x_out).gradient)
    kept = list(state.memory)
    assert 0 < len(kept) <= 3
    prob2 = quadratic_problem(A, center=np.full(4, 0.5))
    solve_to_tolerance(prob2, state, 1e10)
    assert list(state.memory) == kept


def test_iteration_cap_status():
    prob = quadratic_problem(random_spd(6, 1, cond=1e6))
    res = solve_to_tolerance(prob, SolverState(np.ones(6)), 1e-14, SolverConfig(inner_cap=2))
    assert res.status is InnerStatus.ITERATION_CAP
    assert res.inner_iterations == 2


def test_default_cap_scales_with_dimension():
    assert SolverConfig().cap_for(7) == 1400
    assert SolverConfig(inner_cap=5).cap_for(7) == 5


def test_line_search_failure_status():
    prob = quadratic_problem(np.eye(2) * 100.0)
    cfg = SolverConfig(line_search=LineSearchParams(initial_step=1e6, max_backtracks=2))
    state = SolverState([1.0, 1.0])
    res = solve_to_tolerance(prob, state, 1e-8, cfg)
    assert res.status is InnerStatus.LINE_SEARCH_FAILURE
    np.testing.assert_array_equal(res.x_out, [1.0, 1.0])
    assert "line-search failure" in state.events


def test_gradient_descent_method_only_takes_steepest_steps():
    prob = quadratic_problem(np.diag([1.0, 3.0]))
    res = solve_to_tolerance(prob, SolverState([1.0, 1.0]), 1e-6, SolverConfig(method="gd"))
    assert res.status is InnerStatus.CONVERGED
    assert all(s.steepest for s in res.steps)


def test_function_only_trials_follow_the_same_path():
    A = random_spd(4, 5)
    a = quadratic_problem(A)
    b = quadratic_problem(A)
    ra = solve_to_tolerance(a, SolverState(np.ones(4)), 1e-8)
    rb = solve_to_tolerance(b, SolverState(np.ones(4)), 1e-8, SolverConfig(line_search_gradients=False))
    np.testing.assert_array_equal(ra.x_out, rb.x_out)
    assert ra.value_calls == 0
    assert rb.value_calls > 0
    assert rb.grad_calls == rb.inner_iterations + 1


def test_non_positive_tolerance_rejected():
    with pytest.raises(ValueError):
        solve_to_tolerance(quadratic_problem(np.eye(1)), SolverState([1.0]), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(1.0, 1e4), st.integers(1, 6))
def test_accepted_steps_satisfy_invariants(d, seed, cond, memory):
    A = random_spd(d, seed, cond)
    x0 = np.random.default_rng(seed + 1).standard_normal(d)
    prob = quadratic_problem(A)
    state = SolverState(x0, memory=memory)
    res = solve_to_tolerance(prob, state, 1e-7, SolverConfig(memory=memory, inner_cap=300))
    assert res.status is not InnerStatus.LINE_SEARCH_FAILURE
    for step in res.steps:
        assert step.slope < 0
        assert step.armijo_holds()
        assert step.f_after <= step.f_before
    assert len(state.memory) <= memory
    for pair in state.memory:
        assert pair.s @ pair.y > 1e-10 * np.linalg.norm(pair.s) * np.linalg.norm(pair.y)
