"""Model parameters, characteristic roots and the constant-payout criterion.

The surplus is ``X_t = x + mu*t + sigma*W_t`` minus dividends paid at a rate
in ``[0, xi]``; dividends are discounted at rate ``delta`` and valued with the
exponential utility ``U(x) = (1 - exp(-gamma*x)) / gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import InapplicableError, ParameterError


@dataclass(frozen=True)
class ModelParams:
    mu: float
    sigma: float
    delta: float
    gamma: float
    xi: float

    def __post_init__(self):
        for name in ("mu", "sigma", "delta", "gamma", "xi"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)):
                raise ParameterError(name, f"expected a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(name, "must be finite")
            object.__setattr__(self, name, float(value))
        for name in ("sigma", "delta", "gamma", "xi"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(name, "must be strictly positive")

    @cached_property
    def capital_delta(self) -> float:
        """``xi * gamma / delta``, the utility scale of paying ``xi`` forever."""
        return self.xi * self.gamma / self.delta

    def replace(self, **changes) -> "ModelParams":
        fields = dict(mu=self.mu, sigma=self.sigma, delta=self.delta,
                      gamma=self.gamma, xi=self.xi)
        fields.update(changes)
        return ModelParams(**fields)

    def to_dict(self) -> dict:
        return dict(mu=self.mu, sigma=self.sigma, delta=self.delta,
                    gamma=self.gamma, xi=self.xi)


def make_params(mu, sigma, delta, gamma, xi) -> ModelParams:
    """Validate and bundle the five model constants."""
    return ModelParams(mu=mu, sigma=sigma, delta=delta, gamma=gamma, xi=xi)


class RootSet(NamedTuple):
    n: int
    eta_n: float
    theta_n: float
    zeta_n: float
    rho_n: float


# The helpers below accept integer arrays and are used by every other module.
# Each root is evaluated on the branch free of cancellation.

def eta(params: ModelParams, n):
    """Negative root of ``(sigma^2/2) r^2 + (mu - xi) r - delta*n = 0``.

    ``n = 0`` gives 0, which is the convention used by the barrier expansion.
    """
    n = np.asarray(n, dtype=float)
    b = params.xi - params.mu
    s2 = params.sigma ** 2
    disc = np.sqrt(b * b + 2.0 * params.delta * s2 * n)
    if b > 0.0:
        out = -2.0 * params.delta * n / (b + disc)
    else:
        # at n = 0 this branch would pick the nonzero root 2b/sigma^2
        out = np.where(n == 0.0, 0.0, (b - disc) / s2)
    return out if out.ndim else float(out)


def rho(params: ModelParams, n):
    n = np.asarray(n, dtype=float)
    out = np.sqrt(params.mu ** 2 + 2.0 * params.sigma ** 2 * params.delta * n) / params.sigma ** 2
    return out if out.ndim else float(out)


def theta(params: ModelParams, n):
    """Positive root of ``(sigma^2/2) r^2 + mu r - delta*n = 0``."""
    n = np.asarray(n, dtype=float)
    mu, s2 = params.mu, params.sigma ** 2
    root = np.sqrt(mu * mu + 2.0 * s2 * params.delta * n)
    if mu > 0.0:
        out = 2.0 * params.delta * n / (mu + root)
    else:
        out = (root - mu) / s2
    return out if out.ndim else float(out)


def zeta(params: ModelParams, n):
    """Negative root of ``(sigma^2/2) r^2 + mu r - delta*n = 0``."""
    n = np.asarray(n, dtype=float)
    mu, s2 = params.mu, params.sigma ** 2
    root = np.sqrt(mu * mu + 2.0 * s2 * params.delta * n)
    if mu < 0.0:
        out = -2.0 * params.delta * n / (root - mu)
    else:
        out = -(mu + root) / s2
    return out if out.ndim else float(out)


def roots(params: ModelParams, n: int) -> RootSet:
    """Characteristic roots for index ``n >= 1``."""
    if int(n) != n or n < 1:
        raise ParameterError("n", "root index must be a positive integer")
    n = int(n)
    return RootSet(n=n, eta_n=eta(params, n), theta_n=theta(params, n),
                   zeta_n=zeta(params, n), rho_n=rho(params, n))


def utility(params: ModelParams, x):
    """Exponential utility ``(1 - exp(-gamma*x)) / gamma``."""
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-params.gamma * x) / params.gamma
    return out if out.ndim else float(out)


class Optimality(NamedTuple):
    optimal: bool
    threshold: float


def optimality_threshold(params: ModelParams) -> float:
    """Largest maximal rate for which paying it until ruin is optimal."""
    if params.mu <= 0.0:
        raise InapplicableError(
            "criterion inapplicable: the threshold delta*sigma^2/(2*mu) needs mu > 0")
    return params.delta * params.sigma ** 2 / (2.0 * params.mu)


def is_constant_strategy_optimal(params: ModelParams) -> Optimality:
    """Classify the constant payout ``C = xi``.

    Paying ``xi`` until ruin is optimal exactly when
    ``xi <= delta*sigma^2/(2*mu)``. Raises :class:`InapplicableError` for
    ``mu <= 0``.
    """
    threshold = optimality_threshold(params)
    return Optimality(optimal=params.xi <= threshold, threshold=threshold)
