"""Certified suboptimality gap of the constant payout strategy.

The maximised HJB residual of ``V^xi`` splits into Poisson-weighted brackets
``c e^{eta_{n+1} y} - e^{eta_n y}``. Their positive parts, integrated against
the occupation kernels ``f_{n+1}``, dominate ``V - V^xi``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ParameterError
from .kernels import ExpSum, integrate_bound, kernel_for_index
from .model import ModelParams, eta, theta
from .series import DEFAULT_TRUNCATION, TruncationConfig, _choose_index, exp_tail


class GoodnessBound(NamedTuple):
    value: float
    terms_used: int
    tail_bound: float
    quadrature_error: float
    terms: tuple = ()

    @property
    def total(self) -> float:
        return self.value + self.tail_bound + self.quadrature_error


def occupation_mass_bound(params: ModelParams, n: int, x: float) -> float:
    """Upper bound on ``int_0^inf f_n(x, y) dy``; nonincreasing in ``n``."""
    th, e = theta(params, n), eta(params, n)
    return 2.0 * (x + 1.0 / th) / (params.sigma ** 2 * (th - e))


def bracket_coefficient(params: ModelParams, n) -> np.ndarray:
    """``-eta_{n+1} xi / (delta (n+1))``; at most 1 exactly when paying ``xi`` is optimal."""
    n = np.asarray(n)
    return -eta(params, n + 1) * params.xi / (params.delta * (n + 1))


def bracket_root(params: ModelParams, n: int) -> float:
    """End of the positive region ``[0, y*)`` of bracket ``n``; 0 when it is empty."""
    c = float(bracket_coefficient(params, n))
    if c <= 1.0:
        return 0.0
    return math.log(c) / (eta(params, n) - eta(params, n + 1))


def goodness_constant(params: ModelParams, trunc: TruncationConfig = DEFAULT_TRUNCATION,
                      t: float = 0.0, x: float = 0.0) -> GoodnessBound:
    """Upper bound on ``V(t, x) - V^xi(t, x)``.

    The sum runs over ``n = 0..N`` with the first ``N`` for which the
    factorial tail majorant drops below ``trunc.tail_tol``.
    """
    if t < 0.0:
        raise ParameterError("t", "must be nonnegative")
    if x < 0.0:
        raise ParameterError("x", "must be nonnegative")
    d, xi = params.delta, params.xi
    s = math.exp(-d * t)
    z = params.capital_delta * s
    c_max = abs(eta(params, 1)) * xi / d
    mass = occupation_mass_bound(params, 1, x)
    n_used, tail = _choose_index(lambda n: xi * s * c_max * mass * exp_tail(z, n), trunc,
                                 "goodness_constant")
    if x == 0.0:
        return GoodnessBound(0.0, n_used, 0.0, 0.0, (0.0,) * (n_used + 1))

    terms, errs = [], []
    log_z = math.log(z)
    for n in range(n_used + 1):
        y_star = bracket_root(params, n)
        if y_star <= 0.0:
            terms.append(0.0)
            errs.append(0.0)
            continue
        g = ExpSum([float(bracket_coefficient(params, n)), -1.0],
                   [eta(params, n + 1), eta(params, n)])
        res = integrate_bound(kernel_for_index(params, n + 1), g, x, 0.0, y_star)
        w = xi * s * math.exp(n * log_z - math.lgamma(n + 1))
        terms.append(w * res.value)
        errs.append(w * res.error)
    return GoodnessBound(max(math.fsum(terms), 0.0), n_used, tail, math.fsum(errs), tuple(terms))
