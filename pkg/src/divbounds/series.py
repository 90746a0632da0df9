"""Return function of the constant payout strategy as certified power series.

With ``s = exp(-delta*t)`` and ``z = Delta*s`` the return function of paying
``xi`` until ruin is

    V(t, x) = exp(-z)/gamma * sum_{n>=1} z^n/n! * (1 - exp(eta_n x)),

a Poisson-weighted sum of nonnegative terms. Every evaluation returns the
truncation index it used and a rigorous bound on the discarded tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, TruncationError
from .model import ModelParams, eta, utility


@dataclass(frozen=True)
class TruncationConfig:
    n_max: int = 60
    tail_tol: float = 1e-12

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ParameterError("n_max", "must be a positive integer")
        if not (self.tail_tol > 0.0):
            raise ParameterError("tail_tol", "must be positive")


DEFAULT_TRUNCATION = TruncationConfig()


class SeriesValue(NamedTuple):
    value: float
    truncation_index: int
    tail_bound: float


def exp_tail(z: float, n: int) -> float:
    """Upper bound on ``sum_{k>n} z^k / k!`` for ``z >= 0``."""
    if z <= 0.0:
        return 0.0
    log_lead = (n + 1) * math.log(z) - math.lgamma(n + 2)
    if z < n + 2:
        # geometric majorant of the ratios z/(k+1) <= z/(n+2)
        return math.exp(log_lead) / (1.0 - z / (n + 2))
    return math.exp(log_lead + z)


def poisson_tail(z: float, n: int) -> float:
    """Upper bound on ``P(Poisson(z) > n)``."""
    if z <= 0.0:
        return 0.0
    return min(1.0, math.exp(-z) * exp_tail(z, n))


def _choose_index(tail_of, trunc: TruncationConfig, what: str):
    for n in range(1, trunc.n_max + 1):
        tail = tail_of(n)
        if tail < trunc.tail_tol:
            return n, tail
    raise TruncationError(
        f"{what}: tail bound {tail_of(trunc.n_max):.3e} still exceeds "
        f"tail_tol={trunc.tail_tol:.1e} at n_max={trunc.n_max}")


def _check_point(t, x):
    if t < 0.0:
        raise ParameterError("t", "must be nonnegative")
    if x < 0.0:
        raise ParameterError("x", "must be nonnegative")


def v_xi(params: ModelParams, trunc: TruncationConfig, t: float, x: float) -> SeriesValue:
    """Return function ``V^xi(t, x)`` of paying ``xi`` until ruin."""
    _check_point(t, x)
    z = params.capital_delta * math.exp(-params.delta * t)
    g = params.gamma
    n_used, tail = _choose_index(lambda n: poisson_tail(z, n) / g, trunc, "v_xi")
    if z == 0.0 or x == 0.0:
        return SeriesValue(0.0, n_used, tail)
    n = np.arange(1, n_used + 1)
    log_w = n * math.log(z) - z - np.array([math.lgamma(k + 1) for k in n])
    terms = np.exp(log_w) * -np.expm1(eta(params, n) * x)
    return SeriesValue(math.fsum(terms) / g, n_used, tail)


def v_xi_dx(params: ModelParams, trunc: TruncationConfig, t: float, x: float) -> SeriesValue:
    """Surplus derivative of :func:`v_xi`, summed term by term."""
    _check_point(t, x)
    z = params.capital_delta * math.exp(-params.delta * t)
    g, s2 = params.gamma, params.sigma ** 2
    b = abs(params.xi - params.mu)
    # |eta_n| <= (2|xi - mu| + sigma*sqrt(2*delta)*n) / sigma^2
    lin = math.sqrt(2.0 * params.delta) / params.sigma

    def tail_of(n):
        return (2.0 * b / s2 * poisson_tail(z, n) + lin * z * poisson_tail(z, n - 1)) / g

    n_used, tail = _choose_index(tail_of, trunc, "v_xi_dx")
    if z == 0.0:
        return SeriesValue(0.0, n_used, tail)
    n = np.arange(1, n_used + 1)
    log_w = n * math.log(z) - z - np.array([math.lgamma(k + 1) for k in n])
    e = eta(params, n)
    terms = np.exp(log_w) * (-e) * np.exp(e * x)
    return SeriesValue(math.fsum(terms) / g, n_used, tail)


def psi(params: ModelParams, trunc: TruncationConfig, s: float, x: float) -> SeriesValue:
    """Normalised sign function of the maximised HJB term for ``C = xi``.

    ``s`` stands for ``exp(-delta*t)``; the value has the same sign as
    ``-V^xi_x + s*(1 - gamma*V^xi)``.
    """
    if not 0.0 <= s <= 1.0:
        raise ParameterError("s", "must lie in [0, 1]")
    if x < 0.0:
        raise ParameterError("x", "must be nonnegative")
    d, xi = params.delta, params.xi
    z = params.capital_delta * s
    # |eta_n|/n is decreasing in n, so every bracket is at most this in modulus
    bracket_max = 1.0 + abs(eta(params, 1)) * xi / d
    n_used, tail = _choose_index(lambda n: bracket_max * exp_tail(z, n), trunc, "psi")
    n = np.arange(0, n_used + 1)
    e = eta(params, n)
    e_next = eta(params, n + 1)
    bracket = e_next * xi / (d * (n + 1)) * np.exp(e_next * x) + np.exp(e * x)
    if z == 0.0:
        weights = np.zeros(n.size)
        weights[0] = 1.0
    else:
        weights = np.exp(n * math.log(z) - np.array([math.lgamma(k + 1) for k in n]))
    return SeriesValue(math.fsum(weights * bracket), n_used, tail)


def value_limit(params: ModelParams, t: float) -> float:
    """Common large-surplus limit of every return function and of the value function."""
    if t < 0.0:
        raise ParameterError("t", "must be nonnegative")
    return utility(params, params.xi / params.delta * math.exp(-params.delta * t))
