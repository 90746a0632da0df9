import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divbounds.errors import ParameterError, TruncationError
from divbounds.model import ModelParams, eta
from divbounds.series import (DEFAULT_TRUNCATION, TruncationConfig, exp_tail, poisson_tail, psi,
                              v_xi, v_xi_dx, value_limit)
from conftest import ref_params
from oracles import v_xi_mp

TR = DEFAULT_TRUNCATION


@pytest.mark.parametrize("xi", [0.15, 1.0, 3.0])
@pytest.mark.parametrize("t,x", [(0.0, 0.3), (0.0, 5.0), (2.0, 1.0), (30.0, 12.0)])
def test_matches_high_precision(xi, t, x):
    p = ref_params(xi)
    got = v_xi(p, TR, t, x)
    want = v_xi_mp(p.mu, p.sigma, p.delta, p.gamma, p.xi, t, x)
    assert abs(got.value - want) <= got.tail_bound + 1e-14


def test_boundary_and_limit(ref):
    for t in (0.0, 1.0, 25.0):
        assert v_xi(ref, TR, t, 0.0).value == 0.0
        assert v_xi(ref, TR, t, 1e3).value == pytest.approx(value_limit(ref, t), abs=1e-8)


def test_pde_residual_grid(ref):
    h = 1e-4
    for t in np.linspace(0.5, 20.0, 10):
        for x in np.linspace(0.5, 15.0, 10):
            v = v_xi(ref, TR, t, x).value
            vt = (v_xi(ref, TR, t + h, x).value - v_xi(ref, TR, t - h, x).value) / (2 * h)
            vx = v_xi_dx(ref, TR, t, x).value
            vxx = (v_xi_dx(ref, TR, t, x + h).value - v_xi_dx(ref, TR, t, x - h).value) / (2 * h)
            s = math.exp(-ref.delta * t)
            res = vt + (ref.mu - ref.xi) * vx + 0.5 * vxx + ref.xi * s * (1 - ref.gamma * v)
            assert abs(res) <= 1e-6


def test_derivative_by_differences(ref):
    for x in (0.1, 1.0, 4.0, 9.0):
        h = 1e-5
        fd = (v_xi(ref, TR, 1.0, x + h).value - v_xi(ref, TR, 1.0, x - h).value) / (2 * h)
        assert v_xi_dx(ref, TR, 1.0, x).value == pytest.approx(fd, rel=1e-8)


@pytest.mark.parametrize("xi", [0.15, 0.5, 1.0])
def test_psi_identity(xi):
    """``-V_x + s(1 - gamma V) = s e^{-Delta s} psi``."""
    p = ref_params(xi)
    for t in (0.0, 3.0):
        s = math.exp(-p.delta * t)
        for x in (0.0, 0.5, 2.0, 7.0):
            lhs = -v_xi_dx(p, TR, t, x).value + s * (1 - p.gamma * v_xi(p, TR, t, x).value)
            rhs = s * math.exp(-p.capital_delta * s) * psi(p, TR, s, x).value
            assert lhs == pytest.approx(rhs, abs=1e-12)


def test_psi_sign_tracks_optimality():
    # paying 0.15 is optimal: psi is nonnegative everywhere
    p = ref_params(0.15)
    assert min(psi(p, TR, s, x).value for s in (0.1, 0.5, 1.0) for x in (0, 0.5, 2, 10)) >= 0.0
    # paying 1 is not: psi is negative near zero at t = 0
    assert psi(ref_params(1.0), TR, 1.0, 0.0).value < 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 40.0), st.integers(1, 80))
def test_tail_bounds_dominate(z, n):
    exact = math.fsum(math.exp(k * math.log(z) - math.lgamma(k + 1)) if z > 0 else 0.0
                      for k in range(n + 1, n + 200))
    assert exp_tail(z, n) >= exact * (1 - 1e-12)
    assert 0.0 <= poisson_tail(z, n) <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(0.0, 20.0), st.floats(0.0, 30.0))
def test_value_between_zero_and_limit(xi, t, x):
    p = ref_params(xi)
    v = v_xi(p, TR, t, x).value
    assert -1e-12 <= v <= value_limit(p, t) + 1e-12


def test_truncation_failure(ref):
    with pytest.raises(TruncationError):
        v_xi(ref, TruncationConfig(n_max=3, tail_tol=1e-14), 0.0, 1.0)
    with pytest.raises(ParameterError):
        v_xi(ref, TR, -1.0, 1.0)
    with pytest.raises(ParameterError):
        TruncationConfig(n_max=0)


def test_mu_above_xi_uses_zero_rate():
    # regression: with mu > xi the order-0 rate must still be exactly zero
    p = ModelParams(mu=0.5, sigma=1.0, delta=0.3, gamma=1.0, xi=0.2)
    s = 1.0
    lhs = -v_xi_dx(p, TR, 0.0, 1.0).value + s * (1 - p.gamma * v_xi(p, TR, 0.0, 1.0).value)
    assert lhs == pytest.approx(math.exp(-p.capital_delta) * psi(p, TR, s, 1.0).value, abs=1e-12)
    assert eta(p, 0) == 0.0
