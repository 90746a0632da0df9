"""Occupation bounds for diffusions whose drift is only known to lie in a band.

For ``dX = C dt + sigma dW`` with ``a <= C <= b``, killed at zero and
discounted at rate ``discount``, the expected discounted local time at ``y``
is at most ``sigma^2 f(x, y)`` and, for any nonnegative ``g``,

    E_x[ int_0^tau exp(-discount*s) g(X_s) ds ] <= int g(y) f(x, y) dy.

The kernel ``f`` is attained by the bang-bang drift ``a`` above ``y`` and
``b`` below. :func:`integrate_bound` evaluates the right-hand side for
positive parts of exponential sums, which is the shape of every integrand
appearing in the goodness bounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import KernelSingularError, ParameterError, RootIsolationError
from .model import ModelParams, eta, theta, zeta


@dataclass(frozen=True)
class DriftBand:
    a: float
    b: float
    sigma: float
    discount: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ParameterError("sigma", "must be strictly positive")
        if not self.discount >= 0.0:
            raise ParameterError("discount", "must be nonnegative")
        if math.isnan(self.a) or math.isnan(self.b) or self.a > self.b:
            raise ParameterError("a", "drift band needs a <= b")
        if not math.isfinite(self.b):
            raise ParameterError("b", "upper drift bound must be finite")


@dataclass(frozen=True)
class OccupationKernel:
    """Closed-form occupation kernel of a drift band.

    ``band.a = -inf`` gives the kernel for drifts that are only bounded above;
    its ``alpha`` is 0.
    """

    band: DriftBand
    alpha: float = field(init=False)
    beta_plus: float = field(init=False)
    beta_minus: float = field(init=False)

    def __post_init__(self):
        a, b, s2, d = self.band.a, self.band.b, self.band.sigma ** 2, self.band.discount
        if a == -math.inf:
            alpha = 0.0
        elif a >= 0.0:
            alpha = (a + math.sqrt(a * a + 2.0 * d * s2)) / s2
        else:
            # a + sqrt(a^2 + c) without cancellation
            alpha = 2.0 * d / (math.sqrt(a * a + 2.0 * d * s2) - a)
        root_b = math.sqrt(b * b + 2.0 * d * s2)
        if b > 0.0:
            beta_plus = 2.0 * d / (root_b + b)
        else:
            beta_plus = (root_b - b) / s2
        beta_minus = -(root_b + b) / s2 if b >= 0.0 else -2.0 * d / (root_b - b)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta_plus", beta_plus)
        object.__setattr__(self, "beta_minus", beta_minus)
        if self._scaled_denominator(0.0) <= 0.0:
            raise KernelSingularError(
                f"kernel singular for band {self.band}: denominator vanishes")

    @classmethod
    def from_band(cls, a, b, sigma, discount) -> "OccupationKernel":
        return cls(DriftBand(float(a), float(b), float(sigma), float(discount)))

    @classmethod
    def unbounded(cls, b, sigma, discount) -> "OccupationKernel":
        return cls(DriftBand(-math.inf, float(b), float(sigma), float(discount)))

    @property
    def sigma(self) -> float:
        return self.band.sigma

    def _scaled_denominator(self, y):
        # sigma^2 ((b+ + alpha) - (b- + alpha) e^{(b- - b+) y}); the e^{b+ y}
        # factor of the textbook form is cancelled against the numerator
        bp, bm, al = self.beta_plus, self.beta_minus, self.alpha
        return self.sigma ** 2 * ((bp + al) - (bm + al) * np.exp((bm - bp) * y))

    def f(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bp, bm = self.beta_plus, self.beta_minus
        m = np.minimum(x, y)
        gap = (bp - bm) * m
        # e^{b+ m} - e^{b- m} cancels for small m; use expm1 there
        with np.errstate(over="ignore"):
            small = 2.0 * np.exp(bm * m - bp * y) * np.expm1(np.minimum(gap, 1.0))
        large = 2.0 * (np.exp(bp * (m - y)) - np.exp(bm * m - bp * y))
        num = np.where(gap < 1.0, small, large)
        num = num * np.exp(-self.alpha * np.maximum(x - y, 0.0))
        out = num / self._scaled_denominator(y)
        return out if out.ndim else float(out)

    def f_x(self, x, y):
        """Derivative in the starting point; the left derivative at ``x == y``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bp, bm = self.beta_plus, self.beta_minus
        den = self._scaled_denominator(y)
        below = 2.0 * (bp * np.exp(bp * (x - y)) - bm * np.exp(bm * x - bp * y)) / den
        above = -self.alpha * self.f(x, y)
        out = np.where(x <= y, below, above)
        return out if out.ndim else float(out)

    def f_xx(self, x, y):
        """Second derivative in the starting point for ``x != y``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bp, bm = self.beta_plus, self.beta_minus
        den = self._scaled_denominator(y)
        below = 2.0 * (bp ** 2 * np.exp(bp * (x - y)) - bm ** 2 * np.exp(bm * x - bp * y)) / den
        above = self.alpha ** 2 * self.f(x, y)
        out = np.where(x < y, below, above)
        return out if out.ndim else float(out)

    def tail_majorant(self, x: float, y0: float):
        """Return ``(K, rate)`` with ``f(x, y) <= K exp(-rate*y)`` for ``y >= y0 >= x``."""
        bp, bm, al = self.beta_plus, self.beta_minus, self.alpha
        den_min = (bp + al) - max(0.0, bm + al) * math.exp((bm - bp) * y0)
        if den_min <= 0.0:
            raise KernelSingularError("tail majorant undefined: denominator not bounded away from 0")
        k = 2.0 * (math.exp(bp * x) - math.exp(bm * x)) / (self.sigma ** 2 * den_min)
        return k, bp


def kernel_f(band: DriftBand, x, y):
    return OccupationKernel(band).f(x, y)


def kernel_f_unbounded(b, sigma, discount, x, y):
    """Kernel for drifts bounded above by ``b`` only (the ``a -> -inf`` limit)."""
    return OccupationKernel.unbounded(b, sigma, discount).f(x, y)


def band_for_index(params: ModelParams, n: int) -> DriftBand:
    """Drift band of the surplus under any admissible strategy, discounted at ``delta*n``."""
    return DriftBand(params.mu - params.xi, params.mu, params.sigma, params.delta * n)


def kernel_for_index(params: ModelParams, n: int) -> OccupationKernel:
    return OccupationKernel(band_for_index(params, n))


def kernel_f_n(params: ModelParams, n: int, x, y):
    """Occupation kernel written with the model roots ``eta_n, theta_n, zeta_n``."""
    if int(n) != n or n < 1:
        raise ParameterError("n", "must be a positive integer")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e, th, ze = eta(params, n), theta(params, n), zeta(params, n)
    m = np.minimum(x, y)
    num = 2.0 * (np.exp(th * (m - y)) - np.exp(ze * m - th * y)) * np.exp(e * np.maximum(x - y, 0.0))
    den = params.sigma ** 2 * ((th - e) - (ze - e) * np.exp((ze - th) * y))
    out = num / den
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ExpSum:
    """``g(y) = sum_i coeffs[i] * exp(rates[i] * (y - origin))``."""

    coeffs: np.ndarray
    rates: np.ndarray
    origin: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        r = np.atleast_1d(np.asarray(self.rates, dtype=float))
        if c.shape != r.shape:
            raise ValueError("coeffs and rates must have equal length")
        # merge equal rates and drop vanishing terms
        ur, inv = np.unique(r, return_inverse=True)
        uc = np.zeros(ur.size)
        np.add.at(uc, inv, c)
        keep = uc != 0.0
        object.__setattr__(self, "coeffs", uc[keep])
        object.__setattr__(self, "rates", ur[keep])

    @classmethod
    def constant(cls, value: float) -> "ExpSum":
        return cls(np.array([value]), np.array([0.0]))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.coeffs.size == 0:
            return np.zeros_like(y) if y.ndim else 0.0
        out = np.exp(np.multiply.outer(y - self.origin, self.rates)) @ self.coeffs
        return out if np.ndim(out) else float(out)

    def scalar(self, y: float) -> float:
        u = y - self.origin
        return math.fsum(c * math.exp(r * u) for c, r in zip(self.coeffs, self.rates))

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def abs_majorant(self) -> "ExpSum":
        return ExpSum(np.abs(self.coeffs), self.rates, self.origin)


def sign_change_roots(g: ExpSum, lo: float, hi: float, n_scan: int | None = None) -> list[float]:
    """Roots of ``g`` in ``(lo, hi)`` located by a sign scan and Brent refinement.

    The scan mixes a uniform grid with a geometric grid clustered at ``lo``.
    """
    if g.is_zero or g.coeffs.size == 1:
        return []
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("root scan needs a finite interval lo < hi")
    n_scan = n_scan or max(256, 48 * g.coeffs.size)
    width = hi - lo
    grid = np.concatenate([
        np.linspace(lo, hi, n_scan),
        lo + np.geomspace(1e-9 * width, width, n_scan // 2),
    ])
    grid = np.unique(np.clip(grid, lo, hi))
    vals = g(grid)
    if not np.all(np.isfinite(vals)):
        raise RootIsolationError("exponential sum is not finite on the scan grid")
    found = []
    sgn = np.sign(vals)
    for i in range(grid.size - 1):
        if sgn[i] == 0.0 and lo < grid[i] < hi:
            found.append(float(grid[i]))
        elif sgn[i] * sgn[i + 1] < 0.0:
            u, v = float(grid[i]), float(grid[i + 1])
            gu, gv = g.scalar(u), g.scalar(v)
            if gu * gv > 0.0:
                # the two evaluations disagree only at rounding level; keep the
                # sign change at the cheaper midpoint estimate
                found.append(0.5 * (u + v))
                continue
            if gu == 0.0 or gv == 0.0:
                found.append(u if gu == 0.0 else v)
                continue
            try:
                r = optimize.brentq(g.scalar, u, v, xtol=1e-13, rtol=1e-15, maxiter=200)
            except (ValueError, RuntimeError) as exc:
                raise RootIsolationError(f"bisection failed on [{u}, {v}]") from exc
            found.append(float(r))
    return found


class IntegralResult(NamedTuple):
    value: float
    error: float


def _product_integral(kernel: OccupationKernel, g: ExpSum, x: float, a: float, b: float):
    coeffs, rates, origin = g.coeffs, g.rates, g.origin
    bp, bm, al = kernel.beta_plus, kernel.beta_minus, kernel.alpha
    s2 = kernel.sigma ** 2
    terms = list(zip(coeffs.tolist(), rates.tolist()))
    exp = math.exp

    def integrand(y):
        gy = 0.0
        u = y - origin
        for c, r in terms:
            gy += c * exp(r * u)
        m = x if x < y else y
        num = 2.0 * (exp(bp * (m - y)) - exp(bm * m - bp * y))
        if x > y:
            num *= exp(-al * (x - y))
        return gy * num / (s2 * ((bp + al) - (bm + al) * exp((bm - bp) * y)))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, a, b, epsabs=1e-15, epsrel=1e-11, limit=400)
    if caught:
        # quad's own estimate is unreliable once it warns
        err = max(err, 1e-6 * abs(val))
    return val, err


def integrate_bound(kernel: OccupationKernel, g: ExpSum, x: float,
                    lo: float = 0.0, hi: float = math.inf) -> IntegralResult:
    """``int_lo^hi g(y)^+ f(x, y) dy`` with an error estimate.

    Sign changes of ``g`` and the kink of ``f`` at ``y = x`` split the domain
    into pieces on which the integrand is smooth. An infinite upper limit is
    cut where the exponential majorant of the remainder is negligible; that
    remainder is included in the returned error.
    """
    if x < 0.0 or lo < 0.0:
        raise ParameterError("x", "kernel arguments must be nonnegative")
    if not lo < hi:
        if lo == hi:
            return IntegralResult(0.0, 0.0)
        raise ParameterError("hi", "integration domain needs lo < hi")
    if g.is_zero or x == 0.0:
        return IntegralResult(0.0, 0.0)

    if math.isinf(hi):
        if np.any(g.rates >= kernel.beta_plus):
            raise ValueError("integrand does not decay: a rate is not below the kernel decay rate")
        y_cut = max(lo, x, g.origin) + 10.0 / max(kernel.beta_plus, 1e-3)
    else:
        y_cut = hi

    def pieces(a, b):
        cuts = sorted({a, b, *[r for r in sign_change_roots(g, a, b) if a < r < b],
                       *([x] if a < x < b else [])})
        total = err = 0.0
        for u, v in zip(cuts[:-1], cuts[1:]):
            if v - u <= 0.0:
                continue
            if g.scalar(0.5 * (u + v)) > 0.0:
                val, e = _product_integral(kernel, g, x, u, v)
                total += val
                err += e
        return total, err

    value, error = pieces(lo, y_cut)
    if math.isinf(hi):
        maj = g.abs_majorant()
        while True:
            k, rate = kernel.tail_majorant(x, y_cut)
            tail = k * sum(
                c * math.exp(r * (y_cut - maj.origin) - rate * y_cut) / (rate - r)
                for c, r in zip(maj.coeffs, maj.rates))
            if tail <= 1e-13 * value or tail <= 1e-300:
                error += tail
                break
            step = max(y_cut - lo, 1.0)
            v, e = pieces(y_cut, y_cut + step)
            value += v
            error += e
            y_cut += step
    return IntegralResult(float(value), float(error))


def piecewise_drift_occupation(levels, drifts, sigma: float, discount: float,
                               lo: float, hi: float, x: float) -> float:
    """Exact ``E_x[int_0^tau e^{-discount s} 1{lo <= X_s <= hi} ds]`` for a layered drift.

    ``drifts[i]`` applies on ``(levels[i-1], levels[i]]``. Solves the
    resolvent equation ``(sigma^2/2) u'' + c u' - discount u = -1_[lo, hi]``
    with ``u(0) = 0``, bounded ``u`` and ``C^1`` matching at every
    breakpoint. Growing modes are anchored at the right end of each region
    and decaying ones at the left, so every basis value lies in ``(0, 1]``.
    """
    levels = np.asarray(levels, dtype=float)
    drifts = np.asarray(drifts, dtype=float)
    if drifts.size != levels.size + 1:
        raise ParameterError("drifts", "need one more drift than levels")
    if not (sigma > 0.0 and discount > 0.0):
        raise ParameterError("discount", "sigma and discount must be positive")
    if x <= 0.0 or hi <= max(lo, 0.0):
        return 0.0
    edges = np.unique(np.concatenate([[0.0], levels[levels > 0.0], [v for v in (lo, hi) if v > 0.0]]))
    n = edges.size
    s2 = sigma * sigma
    right = np.append(edges[1:], np.inf)
    mid = np.where(np.isinf(right), edges + 1.0, 0.5 * (edges + right))
    c = drifts[np.searchsorted(levels, mid, side="left")]
    root = np.sqrt(c * c + 2.0 * discount * s2)
    rp, rm = (root - c) / s2, (-root - c) / s2
    part = np.where((mid >= lo) & (mid <= hi), 1.0 / discount, 0.0)

    def basis(i, z, der):
        # growing mode anchored at the right end; the last region has none
        up = 0.0 if i == n - 1 else rp[i] ** der * math.exp(rp[i] * (z - right[i]))
        return up, rm[i] ** der * math.exp(rm[i] * (z - edges[i]))

    M = np.zeros((2 * n, 2 * n))
    rhs = np.zeros(2 * n)
    M[0, :2] = basis(0, 0.0, 0)
    rhs[0] = -part[0]
    row = 1
    for i in range(n - 1):
        z = edges[i + 1]
        for der in (0, 1):
            M[row, 2 * i:2 * i + 2] = basis(i, z, der)
            M[row, 2 * i + 2:2 * i + 4] = [-v for v in basis(i + 1, z, der)]
            rhs[row] = part[i + 1] - part[i] if der == 0 else 0.0
            row += 1
    M[row, 2 * n - 2] = 1.0
    coef = np.linalg.solve(M, rhs)
    i = int(np.searchsorted(edges, x, side="right")) - 1
    up, down = basis(i, x, 0)
    return float(part[i] + coef[2 * i] * up + coef[2 * i + 1] * down)
