"""Compare the certified gaps of the constant payout and the barrier approximation.

For a small maximal rate the constant payout is optimal and both bounds are
(numerically) zero. For a large rate paying at full speed from the start is
wasteful: its bound is large, while a barrier strategy at the smooth-fit level
has a gap that is much smaller and almost entirely suboptimality.
"""

import numpy as np

from divbounds.barrier import BarrierConfig, build_coefficients, default_barrier, goodness_barrier, v_approx
from divbounds.constant import goodness_constant
from divbounds.model import ModelParams, is_constant_strategy_optimal
from divbounds.series import DEFAULT_TRUNCATION, v_xi

xs = np.array([1.0, 2.0, 5.0, 10.0, 20.0])

for xi in (0.15, 0.32, 1.0):
    p = ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=xi)
    verdict = is_constant_strategy_optimal(p)
    q = default_barrier(p)
    table = build_coefficients(p, BarrierConfig(q=q, N=20))
    print(f"\nxi = {xi}: threshold {verdict.threshold:.4f}, constant optimal: {verdict.optimal}, barrier q = {q:.4f}")
    print(f"{'x':>6} {'V^xi':>10} {'gap(const)':>12} {'V^N':>10} {'gap(barrier)':>13} {'approx part':>12}")
    for x in xs:
        gc = goodness_constant(p, DEFAULT_TRUNCATION, 0.0, x)
        gb = goodness_barrier(p, table, DEFAULT_TRUNCATION, 0.0, x)
        print(f"{x:6.1f} {v_xi(p, DEFAULT_TRUNCATION, 0.0, x).value:10.5f} {gc.total:12.3e} "
              f"{v_approx(p, table, 0.0, x):10.5f} {gb.total:13.3e} {gb.approximation:12.3e}")
