r"""
Sample-size and tolerance schedules
-----------------------------------
Convergence needs the sample sizes to grow fast enough that
``sum_k M_k^{-1/2}`` is finite, and the tolerances to shrink like
``M_k^{-1/2}``. This script prints both kinds of schedule and the
summability report for each.
"""
import numpy as np

from retro_opt import (
    RateCheckConfig,
    SampleSizeSchedule,
    ToleranceSchedule,
    check_summability,
    geometric_rate_bound,
    next_tolerance,
)
from retro_opt.schedule import sample_sizes

geo = SampleSizeSchedule.geometric(c1=2.0, m1=1)
poly = SampleSizeSchedule.polynomial_factor(a=7.0, b=1.7, m1=2)
print("geometric :", sample_sizes(geo, 10))
print("polynomial:", sample_sizes(poly, 10))

#%%
# The geometric schedule is certified analytically. The polynomial factor
# tends to one, so its growth is only reported numerically.
for sched in (geo, poly, SampleSizeSchedule.fixed_list([5] * 50)):
    rep = check_summability(sched, ToleranceSchedule.deterministic(1.0), horizon=100)
    print(f"{sched.kind:>18}: partial sum {rep.partial_sum:8.4f}, verdict {rep.verdict}, bound {rep.bound}")
    for note in rep.notes:
        print("    ", note)

#%%
# Deterministic tolerances are ``c2 / sqrt(M_k)``.
tol = ToleranceSchedule.deterministic(c2=2.0)
print([round(next_tolerance(tol, k, M), 4) for k, M in enumerate(sample_sizes(geo, 6), start=1)])

#%%
# Given estimates of the problem constants, the expected gradient norm under
# the geometric schedule is bounded by a line decaying like ``c1^{-k/2}``.
cfg = RateCheckConfig(c1=2.0, c2=2.0, m1=1, L_estimate=4.0, sigma_estimate=1.0, Lambda_estimate=1.0)
print(np.round([geometric_rate_bound(cfg, k) for k in range(1, 8)], 3))
