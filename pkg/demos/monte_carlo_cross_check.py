"""Simulate a few dividend strategies and set them against the certified upper bounds.

Every admissible strategy has expected utility below ``V`` and hence below
``V^C + bound(C)`` for any analysed strategy ``C``. The simulations here make
that visible, and also confirm the closed-form value of the constant payout.
"""

from divbounds.barrier import BarrierConfig, build_coefficients, default_barrier, goodness_barrier, v_approx
from divbounds.constant import goodness_constant
from divbounds.model import ModelParams
from divbounds.montecarlo import Barrier, ConstantRate, SimConfig, simulate_performance
from divbounds.series import DEFAULT_TRUNCATION, v_xi

p = ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=1.0)
q = default_barrier(p)
table = build_coefficients(p, BarrierConfig(q=q, N=20))
sim = SimConfig(n_paths=20_000, dt=1e-3, seed=11)
x = 5.0

upper = min(v_xi(p, DEFAULT_TRUNCATION, 0.0, x).value + goodness_constant(p, DEFAULT_TRUNCATION, 0.0, x).total,
            v_approx(p, table, 0.0, x) + goodness_barrier(p, table, DEFAULT_TRUNCATION, 0.0, x).total)
print(f"upper bound on V(0, {x}): {upper:.4f}")
print(f"closed form V^xi(0, {x}): {v_xi(p, DEFAULT_TRUNCATION, 0.0, x).value:.4f}")

for strategy in (ConstantRate(1.0), ConstantRate(0.5), Barrier(q), Barrier(0.5 * q), Barrier(2 * q)):
    est = simulate_performance(p, strategy, 0.0, x, sim)
    print(f"{strategy!s:40} {est.mean:.4f} +- {est.stderr:.4f} (bias budget {est.bias_budget:.4f})")
