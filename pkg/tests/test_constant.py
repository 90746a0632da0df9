import math

import pytest
from hypothesis import given, settings, strategies as st

from divbounds.constant import (bracket_coefficient, bracket_root, goodness_constant,
                                occupation_mass_bound)
from divbounds.errors import ParameterError
from divbounds.kernels import ExpSum, integrate_bound, kernel_for_index
from conftest import ref_params
from oracles import constant_bound_mp

# brute-force values from oracles.constant_bound_mp (mpmath quadrature of the
# textbook kernel, 60 terms), reference model with xi = 1
FROZEN = {(0.0, 1.0): 1.035560627608468, (0.0, 5.0): 0.6955014710871289,
          (0.0, 20.0): 0.15253129723603093, (10.0, 3.0): 0.32163443498108935}


@pytest.mark.parametrize("tx", sorted(FROZEN))
def test_frozen_values(tx):
    g = goodness_constant(ref_params(1.0), t=tx[0], x=tx[1])
    assert g.value == pytest.approx(FROZEN[tx], rel=1e-10)
    assert g.tail_bound < 1e-12 and g.quadrature_error < 1e-10


def test_oracle_reproduces_one_frozen_value():
    assert constant_bound_mp(0.15, 1.0, 0.05, 0.2, 1.0, 0.0, 5.0) == pytest.approx(
        FROZEN[(0.0, 5.0)], rel=1e-10)


@pytest.mark.parametrize("xi", [0.05, 0.15, 1 / 6])
def test_zero_when_constant_payout_optimal(xi):
    p = ref_params(xi)
    for x in (0.5, 3.0, 10.0):
        g = goodness_constant(p, t=0.0, x=x)
        assert g.value == 0.0
        assert all(term == 0.0 for term in g.terms)


def test_brackets_empty_exactly_below_threshold():
    for xi in (0.1, 0.15, 1 / 6 - 1e-9):
        p = ref_params(xi)
        assert all(bracket_coefficient(p, n) <= 1.0 for n in range(40))
    assert bracket_root(ref_params(1.0), 0) > 0.0


def test_vanishes_at_zero_and_decays_in_time(ref):
    assert goodness_constant(ref, t=0.0, x=0.0).total == 0.0
    vals = [goodness_constant(ref, t=t, x=4.0).total for t in (0.0, 5.0, 20.0, 50.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.02


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.0, 30.0), st.floats(0.01, 25.0))
def test_terms_nonnegative(xi, t, x):
    g = goodness_constant(ref_params(xi), t=t, x=x)
    assert all(term >= 0.0 for term in g.terms)
    assert g.value == pytest.approx(math.fsum(g.terms), rel=1e-12, abs=1e-300)
    assert math.isfinite(g.total)


@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_mass_bound(n, ref):
    k = kernel_for_index(ref, n)
    for x in (0.5, 4.0, 12.0):
        mass = integrate_bound(k, ExpSum.constant(1.0), x)
        assert mass.value <= occupation_mass_bound(ref, n, x)
    assert occupation_mass_bound(ref, n + 1, 3.0) <= occupation_mass_bound(ref, n, 3.0)


def test_validation(ref):
    with pytest.raises(ParameterError):
        goodness_constant(ref, t=-1.0, x=1.0)
    with pytest.raises(ParameterError):
        goodness_constant(ref, t=0.0, x=-1.0)
