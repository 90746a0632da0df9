"""Fast deterministic self-checks of the closed forms, used by ``divbounds verify``.

Each check returns a :class:`CheckResult` with the worst error seen and the
tolerance it was held to. Monte Carlo is deliberately left out so the suite
runs in seconds.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .barrier import (BarrierConfig, build_coefficients, default_barrier, lower_jet,
                      residual_lemma_check, residual_scale, upper_jet)
from .freeboundary import solve_free_boundary
from .kernels import DriftBand, OccupationKernel
from .model import ModelParams, eta, theta, zeta
from .series import DEFAULT_TRUNCATION, v_xi, v_xi_dx, value_limit

REFERENCE = ModelParams(mu=0.15, sigma=1.0, delta=0.05, gamma=0.2, xi=1.0)


class CheckResult(NamedTuple):
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def _random_params(rng, count, positive_mu=False, max_capital_delta=None):
    """Random model constants; optionally ``mu > 0`` and ``Delta`` capped by rejection."""
    out = []
    while len(out) < count:
        p = ModelParams(mu=rng.uniform(0.02 if positive_mu else -0.5, 1.0),
                        sigma=rng.uniform(0.3, 3.0), delta=rng.uniform(0.01, 0.5),
                        gamma=rng.uniform(0.05, 2.0), xi=rng.uniform(0.05, 3.0))
        if max_capital_delta is None or p.capital_delta <= max_capital_delta:
            out.append(p)
    return out


def check_roots(rng) -> CheckResult:
    worst = 0.0
    n = np.arange(1, 51, dtype=float)
    for p in _random_params(rng, 20):
        s2 = 0.5 * p.sigma ** 2
        for r, drift in ((eta(p, n), p.mu - p.xi), (theta(p, n), p.mu), (zeta(p, n), p.mu)):
            terms = np.abs(np.stack([s2 * r * r, drift * r, p.delta * n]))
            res = np.abs(s2 * r * r + drift * r - p.delta * n) / np.maximum(terms.max(axis=0), 1.0)
            worst = max(worst, float(res.max()))
    return CheckResult("characteristic roots solve their quadratics", worst, 1e-10)


def check_value_pde(params: ModelParams = REFERENCE) -> CheckResult:
    """Finite-difference residual of the constant-payout PDE on a 10 x 10 grid."""
    tr = DEFAULT_TRUNCATION
    h = 1e-4
    worst = 0.0
    for t in np.linspace(0.0, 20.0, 10):
        for x in np.linspace(0.5, 15.0, 10):
            v = v_xi(params, tr, t, x).value
            vt = (v_xi(params, tr, t + h, x).value - v_xi(params, tr, t - h, x).value) / (2 * h) \
                if t > h else (v_xi(params, tr, t + h, x).value - v) / h
            vx = v_xi_dx(params, tr, t, x).value
            vxx = (v_xi_dx(params, tr, t, x + h).value - v_xi_dx(params, tr, t, x - h).value) / (2 * h)
            s = math.exp(-params.delta * t)
            res = vt + (params.mu - params.xi) * vx + 0.5 * params.sigma ** 2 * vxx \
                + params.xi * s * (1.0 - params.gamma * v)
            worst = max(worst, abs(res))
    return CheckResult("constant-payout return function solves its PDE", worst, 1e-6)


def check_value_boundary(params: ModelParams = REFERENCE) -> CheckResult:
    worst = 0.0
    for t in (0.0, 1.0, 10.0):
        worst = max(worst, abs(v_xi(params, DEFAULT_TRUNCATION, t, 0.0).value),
                    abs(v_xi(params, DEFAULT_TRUNCATION, t, 1e3).value - value_limit(params, t)))
    return CheckResult("return function vanishes at 0 and tends to the utility limit", worst, 1e-8)


def check_smooth_fit(rng) -> CheckResult:
    worst = 0.0
    for p in _random_params(rng, 10, positive_mu=True, max_capital_delta=12.0):
        # any q > 0 works; q = 0 has no lower region
        q = max(default_barrier(p), 0.3)
        table = build_coefficients(p, BarrierConfig(q=q, N=int(rng.integers(1, 21))))
        for t in (0.0, 2.0):
            up, lo = upper_jet(p, table, t, q), lower_jet(p, table, t, q)
            scale = residual_scale(p, table, t, q)
            worst = max(worst, abs(up.value - lo.value) / scale, abs(up.dx - lo.dx) / scale,
                        abs(lower_jet(p, table, t, 0.0).value))
    return CheckResult("barrier approximation: value and slope match at the barrier", worst, 1e-10)


def check_pde_identity(rng) -> CheckResult:
    worst = 0.0
    for p in _random_params(rng, 10, positive_mu=True, max_capital_delta=12.0):
        table = build_coefficients(p, BarrierConfig(q=default_barrier(p), N=int(rng.integers(1, 21))))
        for t, x in ((0.0, 0.5), (1.0, 2.0), (5.0, 7.0)):
            r = residual_lemma_check(p, table, t, x)
            worst = max(worst, max(abs(r.below), abs(r.above)) / residual_scale(p, table, t, x))
    return CheckResult("barrier approximation: PDE identities hold up to the truncation defect",
                       worst, 1e-8)


def check_kernel_jump(rng) -> CheckResult:
    worst = 0.0
    for _ in range(10):
        a = rng.uniform(-2.0, 0.5)
        band = DriftBand(a, a + rng.uniform(0.0, 2.0), rng.uniform(0.3, 2.0), rng.uniform(0.05, 1.0))
        k = OccupationKernel(band)
        y = rng.uniform(0.1, 5.0)
        h = 1e-6 * y
        jump = (k.f(y + h, y) - k.f(y, y)) / h - k.f_x(y, y)
        worst = max(worst, abs(jump + 2.0 / band.sigma ** 2) * band.sigma ** 2)
    return CheckResult("occupation kernel slope jumps by -2/sigma^2 across y", worst, 1e-4)


def check_free_boundary_small_rate() -> CheckResult:
    sol = solve_free_boundary(REFERENCE.replace(xi=0.5), K=30)
    err = float(np.nanmax(np.abs(sol.residuals))) if sol.converged else math.inf
    return CheckResult("free-boundary series converges for xi = 0.5 (experimental)", err, 1e-8)


def run_all(seed: int = 7) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check_roots(rng), check_value_pde(), check_value_boundary(), check_smooth_fit(rng),
            check_pde_identity(rng), check_kernel_jump(rng), check_free_boundary_small_rate()]
