r"""
No step size to tune
--------------------
On an ill-conditioned least-squares problem a constant-step SGD run is only
as good as its step size: too large diverges, too small stalls. RA with its
default settings needs no such choice. Both methods get the same budget of
per-sample oracle evaluations.
"""
import numpy as np

from retro_opt import SampleSizeSchedule, SgdConfig, ToleranceSchedule, make_least_squares, run_ra, run_sgd

oracle = make_least_squares(p=20, N=5000, seed=3, condition_number=1e6)
x0 = np.zeros(20)
loss0, _ = oracle.full_data(x0)
print(f"Gram condition number {oracle.gram_condition_number():.3g}, starting loss {loss0:.4g}")

#%%
# RA with library defaults.
ra = run_ra(oracle, x0, SampleSizeSchedule.polynomial_factor(7.0, 1.7, 2), ToleranceSchedule.adaptive(), K=10)
budget = ra.records[-1].cumulative_oracle_work
print(f"RA: loss {oracle.full_data(ra.final_x)[0]:.4g} after {budget} oracle evaluations")

#%%
# SGD with mini-batches of 32 and the same budget, over eight step sizes.
for e in range(1, 9):
    eta = 10.0**-e
    tr = run_sgd(oracle, x0, SgdConfig(eta, 32, budget // 32), eval_cadence=10**9, track_true=False)
    status = tr.records[-1].inner_status
    loss = oracle.full_data(tr.final_x)[0] if status == "ok" else float("nan")
    print(f"SGD step 1e-{e}: {status:>8}, loss {loss:.4g}")

#%%
# A bigger budget makes RA's advantage less dramatic but it keeps improving
# without any retuning: a geometric schedule spends more samples per step.
ra_geo = run_ra(oracle, x0, SampleSizeSchedule.geometric(2.0, 20), ToleranceSchedule.adaptive(), K=10)
print(f"RA (geometric): loss {oracle.full_data(ra_geo.final_x)[0]:.4g} "
      f"after {ra_geo.records[-1].cumulative_oracle_work} oracle evaluations")
