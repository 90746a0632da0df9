"""Order-N approximation of a constant-barrier strategy and its goodness bound.

Above the barrier ``q`` the performance is approximated by

    F^N(t, x) = sum_{n=1}^N s^n sum_{k=0}^n A[n, k] exp(eta_k (x - q)),

below it by ``G^N(t, x) = sum_n D[n] s^n phi_n(x)`` with ``phi_n(0) = 0`` and
``phi_n(q) = 1``, where ``s = exp(-delta*t)``. The diagonal coefficients
``A[n, n]`` enforce value and slope matching at ``q`` order by order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constant import occupation_mass_bound
from .errors import CoefficientOverflowError, InapplicableError, ParameterError
from .kernels import ExpSum, integrate_bound, kernel_for_index
from .model import ModelParams, eta, theta, zeta
from .series import DEFAULT_TRUNCATION, TruncationConfig, exp_tail

_OVERFLOW = 1e300


@dataclass(frozen=True)
class BarrierConfig:
    q: float
    N: int = 20

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q >= 0.0):
            raise ParameterError("q", "barrier must be a finite nonnegative level")
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError("N", "truncation order must be a positive integer")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "q", float(self.q))


def default_barrier(params: ModelParams) -> float:
    """Barrier from smooth fit of the leading-order terms, clipped at 0.

    Solves ``exp((theta_1 - zeta_1) q) = (-zeta_1)(eta_1 - zeta_1) / (theta_1 (theta_1 - eta_1))``.
    For large ``xi`` it tends to the classical risk-neutral optimal barrier.
    """
    if params.mu <= 0.0:
        raise InapplicableError("default barrier needs mu > 0")
    e, th, ze = eta(params, 1), theta(params, 1), zeta(params, 1)
    num, den = (-ze) * (e - ze), th * (th - e)
    if not (num > 0.0 and den > 0.0):
        raise InapplicableError("default barrier: logarithm arguments are not positive")
    return max((math.log(num) - math.log(den)) / (th - ze), 0.0)


@dataclass(frozen=True)
class CoefficientTable:
    """Coefficients of the barrier approximation, immutable after construction.

    ``A`` is ``(N+1, N+1)`` with row ``n`` holding ``A[n, 0..n]`` (row 0 unused).
    ``inv_nu[n] = 1/nu_n = phi_n(q)/phi_n'(q)`` which is 0 for ``q = 0``.
    """

    q: float
    N: int
    A: np.ndarray
    D: np.ndarray
    inv_nu: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    zeta: np.ndarray

    @property
    def nu(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.inv_nu


def _inv_nu(q, th, ze):
    # (1 - e^{(ze-th)q}) / (th - ze e^{(ze-th)q}) without cancellation for small q
    w = np.exp((ze - th) * q)
    return -np.expm1((ze - th) * q) / (th - ze * w)


def build_coefficients(params: ModelParams, config: BarrierConfig) -> CoefficientTable:
    q, N = config.q, config.N
    dlt = params.capital_delta
    k_all = np.arange(N + 2)
    e = eta(params, k_all)
    th = theta(params, k_all)
    ze = zeta(params, k_all)
    inv_nu = np.zeros(N + 2)
    inv_nu[1:] = _inv_nu(q, th[1:], ze[1:])

    A = np.zeros((N + 1, N + 1))
    log_fact = [math.lgamma(m + 1) for m in range(N + 1)]
    for n in range(1, N + 1):
        A[n, 0] = -((-dlt) ** n) * math.exp(-log_fact[n]) / params.gamma
        for k in range(1, n):
            A[n, k] = (-dlt) ** (n - k) * math.exp(-log_fact[n - k]) * A[k, k]
        # sum_k (eta_k - nu) A[n,k] = 0, multiplied through by 1/nu
        w = inv_nu[n]
        lower = A[n, :n]
        A[n, n] = math.fsum((1.0 - e[:n] * w) * lower) / (e[n] * w - 1.0)
        if not np.all(np.isfinite(A[n, : n + 1])) or np.max(np.abs(A[n, : n + 1])) > _OVERFLOW:
            raise CoefficientOverflowError(f"barrier coefficients overflow at order n={n}")
    D = np.zeros(N + 1)
    for n in range(1, N + 1):
        D[n] = math.fsum(A[n, : n + 1])
    if q == 0.0:
        D[:] = 0.0
    for arr in (A, D, inv_nu, e, th, ze):
        arr.setflags(write=False)
    return CoefficientTable(q=q, N=N, A=A, D=D, inv_nu=inv_nu, eta=e, theta=th, zeta=ze)


def _check_tx(t, x):
    if t < 0.0:
        raise ParameterError("t", "must be nonnegative")
    if x < 0.0:
        raise ParameterError("x", "must be nonnegative")


class Jet(NamedTuple):
    """Value and partial derivatives of a smooth approximation at one point."""
    value: float
    dt: float
    dx: float
    dxx: float


def upper_jet(params: ModelParams, table: CoefficientTable, t: float, x: float) -> Jet:
    """``F^N`` and its derivatives; defined for every ``x``, used above the barrier."""
    N = table.N
    n = np.arange(1, N + 1)
    s_pow = np.exp(-params.delta * t * n)
    ek = table.eta[: N + 1]
    expo = np.exp(ek * (x - table.q))
    rows = table.A[1:, :] * expo
    val = rows.sum(axis=1)
    d1 = (rows * ek).sum(axis=1)
    d2 = (rows * ek * ek).sum(axis=1)
    return Jet(math.fsum(s_pow * val), math.fsum(-params.delta * n * s_pow * val),
               math.fsum(s_pow * d1), math.fsum(s_pow * d2))


def _phi(table, n, x, order=0):
    th, ze, q = table.theta[n], table.zeta[n], table.q
    den = -np.expm1((ze - th) * q)
    return (th ** order * np.exp(th * (x - q)) - ze ** order * np.exp(ze * x - th * q)) / den


def lower_jet(params: ModelParams, table: CoefficientTable, t: float, x: float) -> Jet:
    """``G^N`` and its derivatives; identically 0 for ``q = 0``."""
    if table.q == 0.0:
        return Jet(0.0, 0.0, 0.0, 0.0)
    N = table.N
    n = np.arange(1, N + 1)
    w = table.D[1:] * np.exp(-params.delta * t * n)
    p0, p1, p2 = (_phi(table, n, x, k) for k in range(3))
    return Jet(math.fsum(w * p0), math.fsum(-params.delta * n * w * p0),
               math.fsum(w * p1), math.fsum(w * p2))


def jet(params, table, t, x) -> Jet:
    return upper_jet(params, table, t, x) if x >= table.q else lower_jet(params, table, t, x)


def v_approx(params: ModelParams, table: CoefficientTable, t: float, x: float) -> float:
    _check_tx(t, x)
    if x == 0.0:
        # both pieces vanish at 0 by construction; avoid returning rounding noise
        return 0.0
    return jet(params, table, t, x).value


def v_approx_dx(params: ModelParams, table: CoefficientTable, t: float, x: float) -> float:
    _check_tx(t, x)
    return jet(params, table, t, x).dx


def psi_N(params: ModelParams, table: CoefficientTable, t: float, x: float) -> float:
    """``-V^N_x + s (1 - gamma V^N)``; positive where paying ``xi`` is locally better."""
    _check_tx(t, x)
    j = jet(params, table, t, x)
    s = math.exp(-params.delta * t)
    return -j.dx + s * (1.0 - params.gamma * j.value)


def truncation_residual(params: ModelParams, table: CoefficientTable, t: float, x: float) -> float:
    """Closed-form defect ``-s^{N+1} xi gamma sum_k A[N,k] e^{eta_k (x-q)}`` of ``F^N``."""
    N = table.N
    s_pow = math.exp(-params.delta * t * (N + 1))
    terms = table.A[N, : N + 1] * np.exp(table.eta[: N + 1] * (x - table.q))
    return -s_pow * params.xi * params.gamma * math.fsum(terms)


class ResidualCheck(NamedTuple):
    below: float
    above: float


def _fd_jet(fn, t, x):
    h = 1e-5 * (1.0 + abs(x))
    ht = 1e-5 * (1.0 + abs(t))
    v = fn(t, x).value
    vp, vm = fn(t, x + h).value, fn(t, x - h).value
    return Jet(v, (fn(t + ht, x).value - fn(max(t - ht, 0.0), x).value) / (t + ht - max(t - ht, 0.0)),
               (vp - vm) / (2 * h), (vp - 2 * v + vm) / (h * h))


def residual_scale(params: ModelParams, table: CoefficientTable, t: float, x: float) -> float:
    """Sum of absolute values of the terms entering :func:`residual_lemma_check`.

    The identities are exact in the coefficients, so rounding residuals are
    proportional to this magnitude; with large ``Delta`` it reaches 1e16.
    """
    N = table.N
    n = np.arange(1, N + 1)
    s_pow = np.exp(-params.delta * t * n)
    ek = table.eta[: N + 1]
    weight = 1.0 + params.delta * N + np.abs(ek) * (abs(params.mu) + params.xi) \
        + 0.5 * params.sigma ** 2 * ek * ek
    upper = np.abs(table.A[1:, :]) * np.exp(ek * (x - table.q)) * weight
    total = float(np.sum(s_pow[:, None] * upper))
    if table.q > 0.0:
        th, ze = table.theta[1:N + 1], table.zeta[1:N + 1]
        w = np.abs(table.D[1:]) * s_pow
        lower = (1.0 + th * th + ze * ze) * (np.exp(th * (x - table.q)) + np.exp(ze * x - th * table.q)) \
            / -np.expm1((ze - th) * table.q)
        total += float(np.sum(w * lower))
    return 1.0 + total


def residual_lemma_check(params: ModelParams, table: CoefficientTable, t: float, x: float,
                         method: str = "analytic") -> ResidualCheck:
    """Mismatches of the two PDE identities satisfied by the approximation.

    ``below`` is ``G_t + mu G_x + (sigma^2/2) G_xx`` (should vanish), ``above``
    is ``F_t + mu F_x + (sigma^2/2) F_xx + xi psi^N`` minus the closed-form
    truncation defect. Both analytic continuations are evaluated at ``x``.
    """
    _check_tx(t, x)
    if method == "analytic":
        lj, uj = lower_jet(params, table, t, x), upper_jet(params, table, t, x)
    elif method == "fd":
        lj = _fd_jet(lambda tt, xx: lower_jet(params, table, tt, xx), t, x)
        uj = _fd_jet(lambda tt, xx: upper_jet(params, table, tt, xx), t, x)
    else:
        raise ParameterError("method", "expected 'analytic' or 'fd'")
    mu, half_s2, xi = params.mu, 0.5 * params.sigma ** 2, params.xi
    s = math.exp(-params.delta * t)
    below = lj.dt + mu * lj.dx + half_s2 * lj.dxx
    psi_up = -uj.dx + s * (1.0 - params.gamma * uj.value)
    above = uj.dt + mu * uj.dx + half_s2 * uj.dxx + xi * psi_up
    return ResidualCheck(below, above - truncation_residual(params, table, t, x))


# ---------------------------------------------------------------------------
# Goodness bound. psi^N = sum_{n=1}^{N+1} s^n c_n(y) with c_n an exponential
# sum in y; above the barrier the suboptimality integrand is (-c_n)^+, below
# it is c_n^+.

def _psi_coefficients_above(params, table):
    N, g = table.N, params.gamma
    rates = table.eta[: N + 1]
    out = []
    for n in range(1, N + 2):
        c = np.zeros(N + 1)
        if n <= N:
            c -= rates * table.A[n]
        if n == 1:
            c[0] += 1.0
        else:
            c -= g * table.A[n - 1]
        out.append(c)
    return rates, out


def _psi_coefficients_below(params, table):
    """Coefficients of ``c_n`` on ``[0, q]`` over the rates ``theta_m, zeta_m``."""
    N, g, q = table.N, params.gamma, table.q
    rates = np.concatenate([[0.0], table.theta[1: N + 1], table.zeta[1: N + 1]])
    out = []
    for n in range(1, N + 2):
        c = np.zeros(rates.size)
        if n == 1:
            c[0] = 1.0
        for m, wgt, order in ((n, -table.D[n] if n <= N else 0.0, 1),
                              (n - 1, -g * table.D[n - 1] if n >= 2 else 0.0, 0)):
            if wgt == 0.0:
                continue
            th, ze = table.theta[m], table.zeta[m]
            den = -math.expm1((ze - th) * q)
            c[m] += wgt * th ** order / den
            c[N + m] -= wgt * ze ** order * math.exp((ze - th) * q) / den
        out.append(c)
    return rates, out


def _shifted_factored(coeff_rows, dlt, m):
    """``d_m = sum_n c_n Delta^{m+1-n}/(m+1-n)!`` for ``n <= min(N+1, m+1)``."""
    acc = np.zeros_like(coeff_rows[0])
    for n in range(1, min(len(coeff_rows), m + 1) + 1):
        j = m + 1 - n
        acc = acc + coeff_rows[n - 1] * math.exp(j * math.log(dlt) - math.lgamma(j + 1))
    return acc


class BarrierGoodness(NamedTuple):
    above: float
    below: float
    approximation: float
    tail_bound: float
    quadrature_error: float
    grouping: str

    @property
    def suboptimality(self) -> float:
        return self.above + self.below

    @property
    def total(self) -> float:
        return self.above + self.below + self.approximation + self.tail_bound + self.quadrature_error


def approx_error_components(params, table, t, x, form="pointwise"):
    """``(value, error)`` of the bound on ``|V^N - V^C|``.

    ``form="abs_sum"`` integrates ``sum_k |A[N,k]| e^{eta_k (y-q)}``;
    ``"pointwise"`` integrates ``|sum_k A[N,k] e^{eta_k (y-q)}|``, which is never
    larger and avoids the heavy cancellation inside row ``N``. Its rounding
    error is budgeted explicitly.
    """
    if form not in ("pointwise", "abs_sum"):
        raise ParameterError("form", "expected 'pointwise' or 'abs_sum'")
    N = table.N
    if x == 0.0:
        return 0.0, 0.0
    kern = kernel_for_index(params, N + 1)
    w = math.exp(-params.delta * t * (N + 1)) * params.xi * params.gamma
    row = table.A[N, : N + 1]
    if form == "abs_sum":
        res = integrate_bound(kern, ExpSum(np.abs(row), table.eta[: N + 1], table.q), x,
                              table.q, math.inf)
        return w * res.value, w * res.error
    g = ExpSum(row, table.eta[: N + 1], table.q)
    pos = integrate_bound(kern, g, x, table.q, math.inf)
    neg = integrate_bound(kern, ExpSum(-row, table.eta[: N + 1], table.q), x, table.q, math.inf)
    rounding = 4.0 * (N + 1) * np.finfo(float).eps * np.abs(row).sum() \
        * occupation_mass_bound(params, N + 1, x)
    return w * (pos.value + neg.value), w * (pos.error + neg.error + rounding)


def approx_error(params: ModelParams, table: CoefficientTable,
                 trunc: TruncationConfig = DEFAULT_TRUNCATION, t: float = 0.0,
                 x: float = 0.0, form: str = "pointwise") -> float:
    """Bound on ``|V^N - V^C|`` for the barrier strategy, quadrature error included."""
    _check_tx(t, x)
    value, err = approx_error_components(params, table, t, x, form)
    return value + err


def _integrate_rows(params, table, rows, rates, x, lo, hi, sign, s, index_of):
    vals, errs = [], []
    for i, c in enumerate(rows):
        n = index_of(i)
        g = ExpSum(sign * c, rates, table.q)
        if g.is_zero:
            continue
        res = integrate_bound(kernel_for_index(params, n), g, x, lo, hi)
        w = params.xi * s ** n
        vals.append(w * res.value)
        errs.append(w * res.error)
    return math.fsum(vals), math.fsum(errs)


def _power_grouping(params, table, s, x):
    ra, rows_a = _psi_coefficients_above(params, table)
    above = _integrate_rows(params, table, rows_a, ra, x, table.q, math.inf, -1.0, s,
                            lambda i: i + 1)
    below = (0.0, 0.0)
    if table.q > 0.0:
        rb, rows_b = _psi_coefficients_below(params, table)
        below = _integrate_rows(params, table, rows_b, rb, x, 0.0, table.q, 1.0, s,
                                lambda i: i + 1)
    return {"above": (*above, 0.0), "below": (*below, 0.0)}


def _sup_above(params, table):
    N, g = table.N, params.gamma
    out = []
    for n in range(1, N + 2):
        c = 1.0 if n == 1 else g * np.abs(table.A[n - 1]).sum()
        if n <= N:
            c += np.abs(table.eta[: N + 1] * table.A[n]).sum()
        out.append(c)
    return out


def _sup_below(params, table):
    N, g, q = table.N, params.gamma, table.q
    phi_sup = [0.0]
    for m in range(1, N + 1):
        th, ze = table.theta[m], table.zeta[m]
        den = -math.expm1((ze - th) * q)
        # phi' <= (theta e^{theta(y-q)} + |zeta| e^{-theta q}) / den on [0, q]
        phi_sup.append((th + abs(ze) * math.exp(-th * q)) / den)
    out = []
    for n in range(1, N + 2):
        c = 1.0 if n == 1 else g * abs(table.D[n - 1])
        if n <= N:
            c += abs(table.D[n]) * phi_sup[n]
        out.append(c)
    return out


def _factored_grouping(params, table, trunc, s, x):
    dlt = params.capital_delta
    N = table.N
    z = dlt * s
    mass = occupation_mass_bound(params, 1, x)

    def order_for(sups):
        def tail_after(M):
            return params.xi * mass * sum(
                c * s ** n * exp_tail(z, M + 1 - n) for n, c in enumerate(sups, start=1))
        M = N
        while tail_after(M) >= trunc.tail_tol and M < N + trunc.n_max:
            M += 1
        return M, tail_after(M)

    out = {}
    M, tail = order_for(_sup_above(params, table))
    ra, rows_a = _psi_coefficients_above(params, table)
    d_above = [_shifted_factored(rows_a, dlt, m) for m in range(M + 1)]
    out["above"] = (*_integrate_rows(params, table, d_above, ra, x, table.q, math.inf, -1.0, s,
                                     lambda i: i + 1), tail)
    out["below"] = (0.0, 0.0, 0.0)
    if table.q > 0.0:
        M, tail = order_for(_sup_below(params, table))
        rb, rows_b = _psi_coefficients_below(params, table)
        d_below = [_shifted_factored(rows_b, dlt, m) for m in range(M + 1)]
        out["below"] = (*_integrate_rows(params, table, d_below, rb, x, 0.0, table.q, 1.0, s,
                                         lambda i: i + 1), tail)
    return out


def goodness_barrier(params: ModelParams, table: CoefficientTable,
                     trunc: TruncationConfig = DEFAULT_TRUNCATION, t: float = 0.0,
                     x: float = 0.0, grouping: str = "best",
                     approx_form: str = "pointwise") -> BarrierGoodness:
    """Upper bound on ``V(t, x) - V^N(t, x)`` split into its components.

    ``grouping`` selects how ``psi^N`` is split before positive parts are
    taken: ``"power"`` uses its coefficients in ``s``, ``"factored"`` first
    pulls out ``s exp(-Delta s)``, which is exact to order ``N`` when the
    barrier strategy coincides with paying ``xi`` throughout. The regions
    above and below the barrier are bounded separately, so ``"best"`` takes
    the smaller valid bound in each region; the chosen groupings are reported
    as ``"<above>/<below>"``.
    """
    _check_tx(t, x)
    if grouping not in ("power", "factored", "best"):
        raise ParameterError("grouping", "expected 'power', 'factored' or 'best'")
    if x == 0.0:
        return BarrierGoodness(0.0, 0.0, 0.0, 0.0, 0.0, grouping)
    approx, aerr = approx_error_components(params, table, t, x, approx_form)
    s = math.exp(-params.delta * t)
    found = {}
    if grouping in ("power", "best"):
        found["power"] = _power_grouping(params, table, s, x)
    if grouping in ("factored", "best"):
        found["factored"] = _factored_grouping(params, table, trunc, s, x)
    picked = {}
    for region in ("above", "below"):
        picked[region] = min(found, key=lambda k: sum(found[k][region]))
    (a_val, a_err, a_tail) = found[picked["above"]]["above"]
    (b_val, b_err, b_tail) = found[picked["below"]]["below"]
    label = grouping if grouping != "best" else f"{picked['above']}/{picked['below']}"
    return BarrierGoodness(a_val, b_val, approx, a_tail + b_tail, a_err + b_err + aerr, label)
