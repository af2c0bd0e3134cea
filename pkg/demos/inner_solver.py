r"""
The inner solver on its own
---------------------------
The inner solver is L-BFGS with a backtracking Armijo line search. Its
curvature memory lives in a ``SolverState`` that outlives a single solve, so
consecutive sample-path problems can share it.
"""
import numpy as np

from retro_opt import SolverConfig, SolverState, make_quadratic, solve_to_tolerance
from retro_opt.sample_path import SamplePathProblem, SampleSet

rng = np.random.default_rng(0)
Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
A = Q @ np.diag(np.geomspace(1, 1e3, 6)) @ Q.T
A = 0.5 * (A + A.T)

#%%
# A noiseless quadratic oracle turns a single sample into a deterministic
# problem.
problem = SamplePathProblem(make_quadratic(A, np.ones(6)), SampleSet(1, [0], 1))
state = SolverState(np.zeros(6), memory=6)
res = solve_to_tolerance(problem, state, 1e-10, SolverConfig(memory=6))
print(res.status.value, res.inner_iterations, "steps,", res.grad_calls, "gradient calls")
print("error:", np.linalg.norm(res.x_out - 1.0))

#%%
# Steepest descent on the same problem, for comparison.
gd = solve_to_tolerance(SamplePathProblem(make_quadratic(A, np.ones(6)), SampleSet(1, [0], 1)),
                        SolverState(np.zeros(6)), 1e-10, SolverConfig(method="gd", inner_cap=100_000))
print("gradient descent:", gd.status.value, gd.inner_iterations, "steps")

#%%
# The memory survives the solve. A second problem with the same Hessian and
# a shifted center starts from the stored curvature pairs; compare with an
# empty memory.
def shifted():
    return SamplePathProblem(make_quadratic(A, -np.ones(6)), SampleSet(1, [0], 1))


warm = solve_to_tolerance(shifted(), state, 1e-10, SolverConfig(memory=6))
cold = solve_to_tolerance(shifted(), SolverState(res.x_out, memory=6), 1e-10, SolverConfig(memory=6))
print("carried memory:", warm.inner_iterations, "steps; empty memory:", cold.inner_iterations, "steps")
