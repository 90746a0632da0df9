"""Experimental power-series construction of a curved optimal barrier.

Conjectured form of the value function, with ``s = exp(-delta*t)``:

    h(t, x) = (1 - exp(-Delta s))/gamma + exp(-Delta s) sum_n J_n s^n exp(eta_n x)   above alpha(t)
    g(t, x) = sum_n L_n s^n (exp(theta_n x) - exp(zeta_n x))                       below alpha(t)
    alpha(t) = sum_n a_n s^n / n!

Both pieces solve their PDEs for any coefficients, so matching value, slope
and curvature at ``alpha`` order by order fixes ``(L_k, J_k, a_{k-1})``.
Nothing here is certified; convergence of the three series is not known and
is only monitored empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InapplicableError, ParameterError
from .model import ModelParams, eta, theta, zeta

EXPERIMENTAL = True


@dataclass(frozen=True)
class FreeBoundarySolution:
    K: int
    J: np.ndarray          # J[1..K], index 0 unused
    L: np.ndarray          # L[1..K]
    a: np.ndarray          # a[0..K-1]
    b: np.ndarray          # b[j, n] = j-th s-derivative of exp(eta_n alpha) at s = 0
    p: np.ndarray
    q: np.ndarray
    residuals: np.ndarray  # (K, 3) smooth-fit mismatches per order
    converged: bool
    divergence_order: int | None = None
    message: str = ""
    experimental: bool = field(default=True, init=False)

    @property
    def solved_orders(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.residuals[:, 0])))


def leibniz_table(rate: np.ndarray, a: np.ndarray, rows: int) -> np.ndarray:
    """``T[j, n]``: j-th derivative of ``exp(rate[n] * alpha(s))`` at ``s = 0``.

    ``alpha`` has derivatives ``a[0], a[1], ...`` at 0; only ``a[:rows]`` is used.
    """
    T = np.zeros((rows, rate.size))
    if rows == 0:
        return T
    T[0] = np.exp(rate * a[0])
    for k in range(rows - 1):
        acc = np.zeros(rate.size)
        for j in range(k + 1):
            acc += math.comb(k, j) * a[k - j + 1] * T[j]
        T[k + 1] = rate * acc
    return T


def _extend(T, rate, a, k):
    """Row ``k`` of a Leibniz table from rows ``0..k-1`` and ``a[1..k]``."""
    acc = np.zeros(rate.size)
    for j in range(k):
        acc += math.comb(k - 1, j) * a[k - j] * T[j]
    return rate * acc


class _State:
    def __init__(self, params: ModelParams, K: int):
        n = np.arange(K + 1, dtype=float)
        self.eta, self.theta, self.zeta = eta(params, n), theta(params, n), zeta(params, n)
        self.dlt = params.capital_delta
        self.gamma = params.gamma
        self.K = K
        self.J = np.zeros(K + 1)
        self.L = np.zeros(K + 1)
        self.a = np.zeros(K + 1)
        self.b = np.zeros((K, K + 1))
        self.p = np.zeros((K, K + 1))
        self.q = np.zeros((K, K + 1))

    def residual(self, k):
        """``(Y_{m,k} - Z_{m,k} + c_m)`` for ``m = 1, 2, 3``."""
        e, th, ze, J, L = self.eta, self.theta, self.zeta, self.J, self.L
        out = np.zeros(3)
        for m in (1, 2, 3):
            y = math.fsum(
                L[n] * (th[n] ** (m - 1) * self.p[k - n, n] - ze[n] ** (m - 1) * self.q[k - n, n])
                / math.factorial(k - n) for n in range(1, k + 1))
            z = 0.0
            parts = []
            for j in range(1, k + 1):
                x_mj = math.fsum(J[n] * e[n] ** (m - 1) * self.b[j - n, n] / math.factorial(j - n)
                                 for n in range(1, j + 1))
                parts.append((-self.dlt) ** (k - j) / math.factorial(k - j) * x_mj)
            z = math.fsum(parts)
            c = (-self.dlt) ** k / (self.gamma * math.factorial(k)) if m == 1 else 0.0
            out[m - 1] = y - z + c
        return out

    def set_barrier_coefficient(self, i, value):
        """Set ``a_i`` and refresh the Leibniz rows that depend on it."""
        self.a[i] = value
        if i == 0:
            for T, r in ((self.b, self.eta), (self.p, self.theta), (self.q, self.zeta)):
                T[0] = np.exp(r * value)
        else:
            for T, r in ((self.b, self.eta), (self.p, self.theta), (self.q, self.zeta)):
                T[i] = _extend(T, r, self.a, i)

    def jacobian(self, k):
        e, th, ze = self.eta, self.theta, self.zeta
        jac = np.zeros((3, 3))
        for m in (1, 2, 3):
            jac[m - 1, 0] = th[k] ** (m - 1) * self.p[0, k] - ze[k] ** (m - 1) * self.q[0, k]
            jac[m - 1, 1] = -e[k] ** (m - 1) * self.b[0, k]
            jac[m - 1, 2] = (self.L[1] * (th[1] ** m * self.p[0, 1] - ze[1] ** m * self.q[0, 1])
                             - self.J[1] * e[1] ** m * self.b[0, 1]) / math.factorial(k - 1)
        return jac


def leading_barrier(params: ModelParams) -> float:
    """Unclipped order-0 barrier ``a_0``; negative when paying ``xi`` throughout is optimal."""
    e, th, ze = eta(params, 1), theta(params, 1), zeta(params, 1)
    return (math.log(-ze) + math.log(e - ze) - math.log(th) - math.log(th - e)) / (th - ze)


def _first_order(st: _State, params: ModelParams):
    a0 = leading_barrier(params)
    st.set_barrier_coefficient(0, a0)
    e, th, ze = st.eta[1], st.theta[1], st.zeta[1]
    P, Q, B = st.p[0, 1], st.q[0, 1], st.b[0, 1]
    # value and slope matching are linear in (L_1, J_1) once a_0 is known
    lhs = np.array([[P - Q, -B], [th * P - ze * Q, -e * B]])
    rhs = np.array([st.dlt / st.gamma, 0.0])
    st.L[1], st.J[1] = np.linalg.solve(lhs, rhs)


def _growth_diagnostic(st: _State, k: int, window: int = 5) -> bool:
    """True when a coefficient sequence grew, or stayed above 1 in root-test
    magnitude, over ``window`` consecutive orders.

    ``J_k`` follows the Poisson profile ``Delta^k/k!`` of the constant payout
    and legitimately rises until ``k`` is about ``Delta``; it is only tested
    beyond that hump.
    """
    if k < window + 1:
        return False
    seqs = [st.L[1:k + 1], np.array([st.a[i] / math.factorial(i) for i in range(k)])]
    hump = st.dlt + 5.0 * math.sqrt(st.dlt) + window
    if k - window > hump:
        seqs.append(st.J[1:k + 1])
    for seq in seqs:
        tail = np.abs(seq[-(window + 1):])
        if np.all(tail > 0.0) and np.all(tail[1:] > tail[:-1]):
            return True
        # root test: |c_j|^(1/j) > 1 means the series diverges at s = 1 (t = 0)
        j = np.arange(seq.size - window + 1, seq.size + 1)
        last = np.abs(seq[-window:])
        if np.all(last > 0.0) and np.all(np.log(last) / j > 0.0):
            return True
    return False


def solve_free_boundary(params: ModelParams, K: int, solver_tol: float = 1e-10,
                        max_newton: int = 20) -> FreeBoundarySolution:
    """Construct ``(J_k, L_k, a_{k-1})`` for ``k = 1..K``; EXPERIMENTAL.

    Order 1 is solved in closed form. Higher orders are affine in the new
    unknowns and are solved by Newton's method with the analytic Jacobian.
    Exploding coefficients are reported through ``divergence_order`` rather
    than raised.
    """
    if int(K) != K or K < 1:
        raise ParameterError("K", "order must be a positive integer")
    if params.mu <= 0.0:
        raise InapplicableError("free-boundary construction needs mu > 0")
    if not solver_tol > 0.0:
        raise ParameterError("solver_tol", "must be positive")
    K = int(K)
    st = _State(params, K)
    residuals = np.full((K, 3), np.nan)
    divergence, message = None, ""

    with np.errstate(over="ignore", invalid="ignore"):
        _first_order(st, params)
        residuals[0] = st.residual(1)
        for k in range(2, K + 1):
            # a_{k-1} starts at 0; L_k, J_k start at 0
            st.set_barrier_coefficient(k - 1, 0.0)
            r = st.residual(k)
            for _ in range(max_newton):
                jac = st.jacobian(k)
                if not np.all(np.isfinite(jac)) or not np.all(np.isfinite(r)):
                    break
                try:
                    step = np.linalg.solve(jac, -r)
                except np.linalg.LinAlgError:
                    break
                st.L[k] += step[0]
                st.J[k] += step[1]
                st.set_barrier_coefficient(k - 1, st.a[k - 1] + step[2])
                r = st.residual(k)
                scale = 1.0 + max(abs(st.L[k]), abs(st.J[k]), abs(st.a[k - 1]))
                if np.max(np.abs(r)) <= solver_tol * scale or np.max(np.abs(step)) <= 1e-15 * scale:
                    break
            residuals[k - 1] = r
            if not np.all(np.isfinite(r)) or not np.all(np.isfinite([st.L[k], st.J[k], st.a[k - 1]])):
                divergence, message = k, f"non-finite coefficients at order {k}"
                residuals[k - 1] = np.nan
                break
            if _growth_diagnostic(st, k):
                divergence, message = k, f"coefficient growth (ratio or root test, 5 orders) at order {k}"
                break

    solved = int(np.count_nonzero(np.isfinite(residuals[:, 0])))
    scale = 1.0 + np.max(np.abs(np.concatenate([st.J[1:solved + 1], st.L[1:solved + 1]])))
    ok = solved == K and divergence is None and bool(
        np.nanmax(np.abs(residuals)) <= solver_tol * scale)
    if not ok and divergence is None:
        message = "smooth-fit residuals above solver tolerance"
    for arr in (st.J, st.L, st.a, st.b, st.p, st.q, residuals):
        arr.setflags(write=False)
    return FreeBoundarySolution(K=K, J=st.J, L=st.L, a=st.a[:K], b=st.b, p=st.p, q=st.q,
                                residuals=residuals, converged=ok, divergence_order=divergence,
                                message=message)


def barrier_curve(solution: FreeBoundarySolution, params: ModelParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = np.exp(-params.delta * t)
    out = np.zeros_like(s)
    for i, ai in enumerate(solution.a):
        out = out + ai / math.factorial(i) * s ** i
    return out if out.ndim else float(out)


def eval_h(solution, params, t, x):
    s = math.exp(-params.delta * t)
    n = np.arange(1, solution.K + 1)
    w = math.exp(-params.capital_delta * s)
    series = math.fsum(solution.J[1:] * s ** n * np.exp(eta(params, n) * x))
    return -math.expm1(-params.capital_delta * s) / params.gamma + w * series


def eval_g(solution, params, t, x):
    s = math.exp(-params.delta * t)
    n = np.arange(1, solution.K + 1)
    return math.fsum(solution.L[1:] * s ** n
                     * (np.exp(theta(params, n) * x) - np.exp(zeta(params, n) * x)))


def eval_solution(solution: FreeBoundarySolution, params: ModelParams, t: float, x: float):
    """``(value, alpha(t), region)`` with region ``"above"`` for ``x >= alpha(t)``."""
    if t < 0.0 or x < 0.0:
        raise ParameterError("x" if x < 0.0 else "t", "must be nonnegative")
    alpha = barrier_curve(solution, params, t)
    if x >= alpha:
        return eval_h(solution, params, t, x), alpha, "above"
    return eval_g(solution, params, t, x), alpha, "below"
