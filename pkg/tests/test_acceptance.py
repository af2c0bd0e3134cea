"""Exit criteria for the package, one test per criterion.

Each test reports a single PASS/FAIL line through the ``criterion`` fixture;
the lines are printed together at the end of the pytest run.
"""

import math
import time

import numpy as np
import pytest

from retro_opt.baselines import AdamConfig, AdamUpdate, SgdConfig, run_adam, run_sgd
from retro_opt.driver import replay_work, run_ra, verify_tolerance_certificate
from retro_opt.harness.config import load_config
from retro_opt.harness.experiment import run_experiment
from retro_opt.inner_solver import SolverConfig, SolverState, solve_to_tolerance, two_loop_direction
from retro_opt.oracle import (
    SampleId,
    gradient_check,
    make_least_squares,
    make_logistic,
    make_nonconvex_test,
    make_quadratic,
)
from retro_opt.sample_path import SamplePathProblem, SampleSet
from retro_opt.schedule import SampleSizeSchedule, ToleranceSchedule, sample_sizes

pytestmark = pytest.mark.acceptance

DEFAULT_SCHEDULE = SampleSizeSchedule.polynomial_factor(7.0, 1.7, 2)


def test_tolerance_certificate_holds_on_replay(criterion):
    t0 = time.perf_counter()
    g = np.random.default_rng(2024)
    makers = (
        [lambda s: make_least_squares(20, 5000, seed=s)] * 7
        + [lambda s: make_logistic(10, 5000, seed=s)] * 7
        + [lambda s: make_nonconvex_test(5, seed=s)] * 6
    )
    checked = violations = 0
    for make in makers:
        orc = make(int(g.integers(2**31)))
        tr = run_ra(orc, np.zeros(orc.dimension), DEFAULT_SCHEDULE, ToleranceSchedule.adaptive(),
                    K=8, seed=int(g.integers(2**31)), track_true=False)
        for _, ok, _ in verify_tolerance_certificate(orc, tr):
            checked += 1
            violations += not ok
    elapsed = time.perf_counter() - t0
    passed = violations == 0 and checked > 0 and elapsed < 60
    criterion(1, passed, f"tolerance certificate: {checked} converged records, {violations} violations, {elapsed:.1f}s")
    assert passed


@pytest.fixture(scope="module")
def decay_runs():
    """Least squares p=50, N=20000, geometric c1=2, m1=50, eps_k = sigma_1 / sqrt(M_k); 11 seeds, K=14."""
    orc = make_least_squares(50, 20_000, seed=0)
    sched = SampleSizeSchedule.geometric(2.0, 50)
    x0 = np.zeros(50)
    t0 = time.perf_counter()
    norms = []
    for seed in range(11):
        # the first adaptive tolerance is sigma_1 / sqrt(M_1); freeze c2 = sigma_1
        probe = run_ra(orc, x0, sched, ToleranceSchedule.adaptive(), K=1, seed=seed, track_true=False)
        c2 = probe.records[0].eps_k * math.sqrt(probe.records[0].M_k)
        tr = run_ra(orc, x0, sched, ToleranceSchedule.deterministic(c2), K=14, seed=seed)
        norms.append([r.grad_norm_true for r in tr.records])
    return np.array(norms), time.perf_counter() - t0


def test_geometric_decay_of_true_gradient(decay_runs, criterion):
    # K=10 records are the first ten of the K=14 runs; later iterations never
    # influence earlier ones
    norms, elapsed = decay_runs
    ratios = np.median(norms[:, 1:10] / norms[:, 0:9], axis=0)  # k = 2..10
    geo = float(np.exp(np.mean(np.log(ratios[1:]))))  # k = 3..10
    passed = geo <= 0.85
    criterion(2, passed, f"geometric decay: geometric-mean median ratio over k=3..10 = {geo:.3f} (<= 0.85)")
    assert passed


def test_consistency_of_true_gradient(decay_runs, criterion):
    norms, elapsed = decay_runs
    med = np.median(norms, axis=0)
    ratio = float(med[13] / med[0])
    passed = ratio <= 1e-2 and elapsed < 300
    criterion(3, passed, f"consistency: median ||grad f(X_14)|| / median ||grad f(X_1)|| = {ratio:.2e} (<= 1e-2)")
    assert passed


def test_gradients_match_finite_differences(criterion):
    g = np.random.default_rng(7)
    oracles = {
        "least_squares": make_least_squares(8, 500, seed=1),
        "least_squares_ill": make_least_squares(8, 500, seed=1, condition_number=1e4),
        "logistic": make_logistic(6, 500, seed=2),
        "nonconvex": make_nonconvex_test(5, seed=3),
        "quadratic": make_quadratic(np.diag([1.0, 4.0, 9.0]), [1.0, 0.0, -1.0], noise=0.5),
    }
    worst = {}
    for name, orc in oracles.items():
        errs = []
        for _ in range(100):
            x = g.standard_normal(orc.dimension)
            if orc.n_samples is not None:
                s = SampleId(0, int(g.integers(orc.n_samples)))
            else:
                s = SampleId(int(g.integers(2**63)), int(g.integers(2**40)))
            errs.append(gradient_check(orc, x, s))
        worst[name] = max(errs)
    passed = max(worst.values()) <= 1e-5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(4, passed, f"finite-difference gradients (worst relative error): {detail}")
    assert passed


def test_inner_solver_matches_linear_solve(criterion):
    g = np.random.default_rng(5)
    B = g.standard_normal((5, 5))
    A = B @ B.T + 0.5 * np.eye(5)
    A = 0.5 * (A + A.T)
    center = g.standard_normal(5)
    prob = SamplePathProblem(make_quadratic(A, center), SampleSet(1, [0], 1))
    res = solve_to_tolerance(prob, SolverState(np.zeros(5), memory=5), 1e-8, SolverConfig(memory=5))
    direct = np.linalg.solve(A, A @ center)
    err = float(np.linalg.norm(res.x_out - direct))

    gvec = g.standard_normal(5)
    p = two_loop_direction(SolverState(np.zeros(5), memory=5), gvec)
    bitwise = p.tobytes() == (-gvec).tobytes()

    passed = res.grad_norm_out <= 1e-8 and err <= 1e-6 and bitwise
    criterion(5, passed, f"inner solver: ||grad|| = {res.grad_norm_out:.1e}, distance to linear solve = {err:.1e}, "
                         f"empty-memory direction == -g bitwise: {bitwise}")
    assert passed


def test_polynomial_schedule_reproduction(criterion):
    sizes = sample_sizes(DEFAULT_SCHEDULE, 5)
    # frozen from a 50-digit evaluation of M_k = ceil((1 + 7 k^-1.7) M_{k-1})
    expected = [2, 7, 15, 25, 37]
    passed = sizes == expected
    criterion(6, passed, f"schedule: M_1..M_5 = {sizes} (expected {expected})")
    assert passed


def test_step_size_sensitivity_contrast(criterion):
    t0 = time.perf_counter()
    orc = make_least_squares(20, 5000, seed=3, condition_number=1e6)
    cond = orc.gram_condition_number()
    x0 = np.zeros(20)
    loss0, _ = orc.full_data(x0)

    # library defaults throughout: no step size to pick
    ra = run_ra(orc, x0, DEFAULT_SCHEDULE, ToleranceSchedule.adaptive(), K=10, seed=0)
    budget = ra.records[-1].cumulative_oracle_work
    ra_loss, _ = orc.full_data(ra.final_x)
    ra_reduction = 1 - ra_loss / loss0

    failing = []
    outcomes = []
    batch = 32
    for e in range(1, 9):
        eta = 10.0**-e
        tr = run_sgd(orc, x0, SgdConfig(eta, batch, max(1, budget // batch)), seed=0, eval_cadence=10**9,
                     track_true=False)
        diverged = tr.records[-1].inner_status == "diverged"
        loss = math.inf if diverged else orc.full_data(tr.final_x)[0]
        failed = diverged or loss > 0.5 * loss0
        outcomes.append(f"1e-{e}:{'div' if diverged else f'{loss:.3g}'}")
        if failed:
            failing.append(eta)
    elapsed = time.perf_counter() - t0
    passed = cond >= 1e4 and len(failing) >= 3 and ra_reduction >= 0.9 and elapsed < 600
    criterion(7, passed, f"step-size contrast: cond {cond:.2e}, budget {budget} oracle work, RA loss "
                         f"{loss0:.4g} -> {ra_loss:.4g} ({100 * ra_reduction:.1f}% reduction); "
                         f"SGD failing settings {len(failing)}/8 [{' '.join(outcomes)}]")
    assert passed


def test_work_accounting_replays_exactly(criterion):
    traces = []
    orc = make_least_squares(10, 3000, seed=4)
    traces.append(run_ra(orc, np.zeros(10), DEFAULT_SCHEDULE, ToleranceSchedule.adaptive(), K=8))
    traces.append(run_ra(orc, np.zeros(10), DEFAULT_SCHEDULE, ToleranceSchedule.adaptive(m_sigma=2), K=8,
                         solver_cfg=SolverConfig(line_search_gradients=False), nested=True))
    nc = make_nonconvex_test(4, seed=4)
    traces.append(run_ra(nc, np.zeros(4), SampleSizeSchedule.geometric(1.5, 4), ToleranceSchedule.deterministic(1.0), K=8))
    traces.append(run_sgd(orc, np.zeros(10), SgdConfig(total_steps=200), eval_cadence=30))
    traces.append(run_adam(orc, np.zeros(10), AdamConfig(total_steps=200), eval_cadence=30))
    mismatches = 0
    for tr in traces:
        want = [(r.cumulative_oracle_work, r.cumulative_gradient_evals) for r in tr.records]
        mismatches += replay_work(tr.records) != want
    passed = mismatches == 0
    criterion(8, passed, f"work accounting: {len(traces)} traces replayed, {mismatches} mismatches")
    assert passed


def test_rerun_is_byte_identical(tmp_path, criterion):
    configs = {
        "ra": "problem: {kind: logistic, dimension: 5, n_samples: 3000, seed: 2}\nra: {outer_iterations: 6}\n",
        "nonconvex": "problem: {kind: nonconvex, dimension: 3, seed: 1}\nra: {outer_iterations: 6}\n",
        "adam": ("problem: {kind: least_squares, dimension: 5, n_samples: 3000}\nalgorithm: baseline\n"
                 "baseline: {kind: adam, total_steps: 200}\n"),
    }
    differing = []
    n_files = 0
    for name, text in configs.items():
        path = tmp_path / f"{name}.yaml"
        path.write_text(text + "replications: 3\n")
        cfg = load_config(path)
        run_experiment(cfg, tmp_path / name / "a")
        run_experiment(cfg, tmp_path / name / "b")
        for f in sorted((tmp_path / name / "a").iterdir()):
            n_files += 1
            if f.read_bytes() != (tmp_path / name / "b" / f.name).read_bytes():
                differing.append(f"{name}/{f.name}")
    passed = not differing
    criterion(9, passed, f"determinism: {n_files} output files compared, differing: {differing or 'none'}")
    assert passed


def test_baseline_sanity(criterion):
    orc = make_quadratic(np.eye(1), [0.0])
    tr = run_sgd(orc, [1.0], SgdConfig(0.1, 1, 100), eval_cadence=1, track_true=False)
    sgd_err = max(abs(x[0] - 0.9**t) for t, x in enumerate(tr.iterates, start=1))

    cfg = AdamConfig(step_size=0.01)
    g = np.random.default_rng(3)
    lo, hi = math.inf, 0.0
    for _ in range(200):
        grad = g.choice([-1, 1], size=4) * 10.0 ** g.uniform(-5, 5, size=4)  # |g| >= 1e-5 = 1e3 * eps_hat
        step = np.abs(AdamUpdate(cfg, 4)(np.zeros(4), grad)) / cfg.step_size
        lo, hi = min(lo, step.min()), max(hi, step.max())
    passed = sgd_err <= 1e-12 and len(tr.iterates) == 100 and 0.9 <= lo and hi <= 1.0
    criterion(10, passed, f"baselines: SGD max |x_t - 0.9^t| = {sgd_err:.1e}; Adam first step / step_size in "
                          f"[{lo:.6f}, {hi:.6f}]")
    assert passed
