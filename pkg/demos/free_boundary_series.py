"""Expand the free boundary and the value function in powers of ``exp(-delta t)``.

For moderate rates the coefficients settle down and the series value sits
above the constant-payout return function. For large rates the growth
diagnostic flags the order at which the coefficients start to explode.
"""

import numpy as np

from divbounds.freeboundary import barrier_curve, eval_h, solve_free_boundary
from divbounds.model import ModelParams
from divbounds.series import DEFAULT_TRUNCATION, v_xi

for xi in (0.5, 1.0, 5.0):
    p = ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=xi)
    sol = solve_free_boundary(p, K=40)
    print(f"\nxi = {xi}: converged {sol.converged}, divergence order {sol.divergence_order}")
    if not sol.converged:
        print("  ", sol.message)
        continue
    ts = np.array([0.0, 5.0, 20.0])
    print("   barrier a(t):", np.round(barrier_curve(sol, p, ts), 4))
    for x in (0.5, 2.0, 10.0):
        print(f"   x={x:5.1f}  h={eval_h(sol, p, 0.0, x):.6f}  V^xi={v_xi(p, DEFAULT_TRUNCATION, 0.0, x).value:.6f}")
