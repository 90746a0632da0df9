import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divbounds.barrier import (BarrierConfig, _psi_coefficients_above, _psi_coefficients_below,
                               approx_error, build_coefficients, default_barrier, goodness_barrier,
                               lower_jet, psi_N, residual_lemma_check, residual_scale, upper_jet,
                               v_approx, v_approx_dx)
from divbounds.errors import InapplicableError, ParameterError
from divbounds.kernels import ExpSum
from divbounds.model import ModelParams
from divbounds.series import DEFAULT_TRUNCATION, v_xi
from conftest import ref_params
from oracles import leading_barrier_mp

# curvature-fit levels from oracles.leading_barrier_mp
FROZEN_Q = {0.15: 0.0, 1 / 6: 0.0, 0.17: 0.03125810448866637, 0.32: 0.9890731285128124,
            1.0: 2.087556422362344, 100.0: 2.6129697742477074}


@pytest.mark.parametrize("xi", sorted(FROZEN_Q))
def test_default_barrier_frozen(xi):
    assert default_barrier(ref_params(xi)) == pytest.approx(FROZEN_Q[xi], rel=1e-12, abs=1e-15)


def test_default_barrier_oracle():
    for xi in (0.17, 1.0, 100.0):
        assert leading_barrier_mp(0.15, 1.0, 0.05, xi) == pytest.approx(FROZEN_Q[xi], rel=1e-12)
    # random models: curvature fit oracle vs closed form
    rng = np.random.default_rng(3)
    for _ in range(10):
        mu, s, d, xi = rng.uniform(0.05, 0.6), rng.uniform(0.5, 2), rng.uniform(0.02, 0.3), rng.uniform(0.1, 3)
        p = ModelParams(mu=mu, sigma=s, delta=d, gamma=0.3, xi=xi)
        assert default_barrier(p) == pytest.approx(leading_barrier_mp(mu, s, d, xi), rel=1e-9, abs=1e-12)


def test_default_barrier_needs_positive_drift():
    with pytest.raises(InapplicableError):
        default_barrier(ModelParams(mu=-0.1, sigma=1, delta=0.05, gamma=0.2, xi=1))


def _random_model(rng):
    while True:
        p = ModelParams(mu=rng.uniform(0.02, 1.0), sigma=rng.uniform(0.3, 3.0),
                        delta=rng.uniform(0.01, 0.5), gamma=rng.uniform(0.05, 2.0),
                        xi=rng.uniform(0.05, 3.0))
        if p.capital_delta <= 12.0:
            return p


def test_smooth_fit_random():
    rng = np.random.default_rng(21)
    for _ in range(20):
        p = _random_model(rng)
        q = rng.uniform(0.05, 4.0)
        table = build_coefficients(p, BarrierConfig(q=q, N=int(rng.integers(1, 21))))
        for t in (0.0, 1.5, 10.0):
            up, lo = upper_jet(p, table, t, q), lower_jet(p, table, t, q)
            scale = residual_scale(p, table, t, q)
            assert abs(up.value - lo.value) <= 1e-10 * scale
            assert abs(up.dx - lo.dx) <= 1e-10 * scale
            assert lower_jet(p, table, t, 0.0).value == 0.0


def test_smooth_fit_reference_absolute(ref):
    table = build_coefficients(ref, BarrierConfig(q=default_barrier(ref), N=20))
    for t in (0.0, 5.0):
        up, lo = upper_jet(ref, table, t, table.q), lower_jet(ref, table, t, table.q)
        assert abs(up.value - lo.value) <= 1e-10 and abs(up.dx - lo.dx) <= 1e-10


def test_pde_identity_residual_random():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p = _random_model(rng)
        table = build_coefficients(p, BarrierConfig(q=default_barrier(p), N=int(rng.integers(1, 21))))
        for t, x in ((0.0, 0.3), (2.0, 1.0), (0.0, table.q + 0.5), (8.0, 6.0)):
            r = residual_lemma_check(p, table, t, x)
            assert max(abs(r.below), abs(r.above)) <= 1e-8 * residual_scale(p, table, t, x)


def test_analytic_jets_match_differences(ref):
    table = build_coefficients(ref, BarrierConfig(q=default_barrier(ref), N=12))
    # the upper piece carries ~1e-12 rounding from cancelling coefficients
    h = 1e-3
    for fn in (upper_jet, lower_jet):
        for t, x in ((1.0, 1.0), (3.0, 4.0)):
            j = fn(ref, table, t, x)
            vp, vm = fn(ref, table, t, x + h).value, fn(ref, table, t, x - h).value
            dt = (fn(ref, table, t + h, x).value - fn(ref, table, t - h, x).value) / (2 * h)
            assert j.dt == pytest.approx(dt, rel=1e-6, abs=1e-9)
            assert j.dx == pytest.approx((vp - vm) / (2 * h), rel=1e-6, abs=1e-7)
            assert j.dxx == pytest.approx((vp - 2 * j.value + vm) / h ** 2, rel=1e-5, abs=1e-6)
    fd = residual_lemma_check(ref, table, 1.0, 1.0, method="fd")
    assert abs(fd.below) < 1e-3 and abs(fd.above) < 1e-3
    with pytest.raises(ParameterError):
        residual_lemma_check(ref, table, 0.0, 1.0, method="spline")


def test_zero_barrier_reproduces_constant_payout():
    p = ref_params(0.15)
    table = build_coefficients(p, BarrierConfig(q=0.0, N=20))
    for t, x in ((0.0, 0.5), (0.0, 4.0), (5.0, 2.0)):
        assert v_approx(p, table, t, x) == pytest.approx(v_xi(p, DEFAULT_TRUNCATION, t, x).value,
                                                         abs=1e-12)
    assert lower_jet(p, table, 0.0, 0.3).value == 0.0
    assert np.all(table.D == 0.0)


@pytest.mark.parametrize("q", [0.0, 2.087556422362344])
def test_psi_decomposition_reconstructs(ref, q):
    """``sum_n s^n c_n(y)`` reproduces ``psi^N`` computed from the approximation itself."""
    table = build_coefficients(ref, BarrierConfig(q=q, N=10))
    ra, rows_a = _psi_coefficients_above(ref, table)
    for t in (0.0, 2.0):
        s = math.exp(-ref.delta * t)
        for y in (q + 0.1, q + 3.0):
            val = math.fsum(s ** n * ExpSum(c, ra, q).scalar(y) for n, c in enumerate(rows_a, 1))
            assert val == pytest.approx(psi_N(ref, table, t, y), abs=1e-12)
        if q > 0.0:
            rb, rows_b = _psi_coefficients_below(ref, table)
            for y in (0.2, q - 0.1):
                val = math.fsum(s ** n * ExpSum(c, rb, q).scalar(y) for n, c in enumerate(rows_b, 1))
                assert val == pytest.approx(psi_N(ref, table, t, y), abs=1e-12)


def test_goodness_components_reference(ref):
    table = build_coefficients(ref, BarrierConfig(q=default_barrier(ref), N=20))
    assert goodness_barrier(ref, table, x=0.0).total == 0.0
    for x in (1.0, 5.0, 10.0):
        g = goodness_barrier(ref, table, x=x)
        assert min(g.above, g.below, g.approximation, g.tail_bound, g.quadrature_error) >= 0.0
        assert g.approximation < 1e-2 * g.suboptimality
        assert g.total == pytest.approx(g.above + g.below + g.approximation + g.tail_bound
                                        + g.quadrature_error)


def test_grouping_choice_is_no_worse(ref):
    table = build_coefficients(ref, BarrierConfig(q=default_barrier(ref), N=20))
    best = goodness_barrier(ref, table, x=3.0)
    for name in ("power", "factored"):
        other = goodness_barrier(ref, table, x=3.0, grouping=name)
        assert best.suboptimality <= other.suboptimality * (1 + 1e-12)
    with pytest.raises(ParameterError):
        goodness_barrier(ref, table, x=3.0, grouping="none")


def test_approximation_error_decays_with_order(ref):
    q = default_barrier(ref)
    errs = [approx_error(ref, build_coefficients(ref, BarrierConfig(q=q, N=N)), DEFAULT_TRUNCATION,
                         0.0, 5.0) for N in (4, 8, 12, 16, 20)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-8


def test_pointwise_error_tighter_than_termwise(ref):
    table = build_coefficients(ref, BarrierConfig(q=default_barrier(ref), N=20))
    pw = approx_error(ref, table, DEFAULT_TRUNCATION, 0.0, 5.0)
    ab = approx_error(ref, table, DEFAULT_TRUNCATION, 0.0, 5.0, form="abs_sum")
    assert pw <= ab


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 25.0))
def test_approximation_bounded_and_monotone(t, x):
    p = ref_params(1.0)
    table = _REF_TABLE
    v = v_approx(p, table, t, x)
    assert -1e-9 <= v <= -math.expm1(-p.capital_delta * math.exp(-p.delta * t)) / p.gamma + 1e-9
    assert v_approx_dx(p, table, t, x) >= -1e-9


_REF_TABLE = build_coefficients(ref_params(1.0), BarrierConfig(q=2.087556422362344, N=20))


def test_config_validation():
    with pytest.raises(ParameterError):
        BarrierConfig(q=-1.0)
    with pytest.raises(ParameterError):
        BarrierConfig(q=1.0, N=0)
    table = _REF_TABLE
    assert not table.A.flags.writeable
    with pytest.raises(ParameterError):
        v_approx(ref_params(1.0), table, 0.0, -1.0)
