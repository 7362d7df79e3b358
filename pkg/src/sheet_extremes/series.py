"""Truncated positive series with certified tails.

Terms are handled in log space.  Partial sums grow by doubling the number of
terms until the certified tail is within ``tol`` of the partial sum or the
term budget is spent.  The reported value partial + tail is an upper bound
on the infinite sum in either case; ``converged`` only says whether the tail
is small.

Tails come from integral comparison.  For the log-power shape
C L^a e^{-beta L} with L = ln(alpha x + e) the integral is an incomplete
gamma function and is exact; otherwise scipy quadrature is used on the
continuous extension of the term after a decrease check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import integrate

DEFAULT_TOL = 1e-8
BUDGET_1D = 100_000
BUDGET_2D = 1_000_000
_START = 64
_DECREASE_PROBES = 8


class SeriesDivergenceError(ArithmeticError):
    """Terms do not decay fast enough for a certified tail."""


@dataclass
class SeriesValue:
    """Partial sum and tail bound, both in units of exp(log_scale)."""

    partial_sum: float
    terms_used: int
    tail_estimate: float
    converged: bool
    log_scale: float = 0.0

    def __post_init__(self):
        if not self.tail_estimate >= 0:
            raise ValueError("tail estimate must be non-negative")

    @property
    def total(self) -> float:
        return self.partial_sum + self.tail_estimate

    @property
    def log_total(self) -> float:
        return self.log_scale + math.log(self.total)

    @property
    def value(self) -> float:
        """partial + tail in natural units (may under/overflow)."""
        return math.exp(self.log_total)

    @property
    def relative_tail(self) -> float:
        return self.tail_estimate / self.partial_sum if self.partial_sum > 0 else math.inf


def _log_gammainc_upper(a: float, x: float) -> float:
    return float(mpmath.log(mpmath.gammainc(a, a=x)))


def log_power_tail(log_c: float, a: float, beta: float, alpha: float, x0: float) -> float:
    """log of int_{x0}^inf C L^a e^{-beta L} dx, L = ln(alpha x + e).

    Substituting y = L gives (C/alpha) Gamma(a+1, (beta-1) L0) / (beta-1)^{a+1}.
    """
    if beta <= 1.0:
        raise SeriesDivergenceError(f"log-power series needs beta > 1, got {beta:.6g}")
    L0 = math.log(alpha * x0 + math.e)
    b = beta - 1.0
    return (log_c - math.log(alpha) + _log_gammainc_upper(a + 1.0, b * L0)
            - (a + 1.0) * math.log(b))


def log_strip_tail(log_c: float, a: float, beta: float, t0: float) -> float:
    """log of int_{a>=a0, b>=b0} C g~(a+b) e^{a+b} da db with t0 = a0 + b0.

    g(t) = t^q e^{-beta t} peaks at t* = q / beta and g~(t) = g(max(t, t*)) is
    its decreasing majorant (equal to g once t0 >= t*).  Writing t = a + b the
    strip has width t - t0, and with k = beta - 1 the integral is
    C [Gamma(q+2, k s)/k^{q+2} - t0 Gamma(q+1, k s)/k^{q+1}], s = max(t0, t*),
    plus C g(t*) (e^{t*} (t* - t0 - 1) + e^{t0}) when t0 < t*.
    """
    if beta <= 1.0:
        raise SeriesDivergenceError(f"double series needs beta > 1, got {beta:.6g}")
    k = beta - 1.0
    t_star = a / beta
    start = max(t0, t_star)
    with mpmath.workdps(40):
        g2 = mpmath.gammainc(a + 2.0, a=k * start) / mpmath.power(k, a + 2.0)
        g1 = t0 * mpmath.gammainc(a + 1.0, a=k * start) / mpmath.power(k, a + 1.0)
        val = g2 - g1
        if t0 < t_star:
            peak = mpmath.power(t_star, a) * mpmath.exp(-beta * t_star)
            val += peak * (mpmath.exp(t_star) * (t_star - t0 - 1) + mpmath.exp(t0))
        if val <= 0:
            return -math.inf
        return log_c + float(mpmath.log(val))


def _stable_sum(log_terms: np.ndarray) -> tuple[float, float]:
    shift = float(np.max(log_terms))
    if not math.isfinite(shift):
        raise SeriesDivergenceError("non-finite series term")
    return float(np.sum(np.exp(log_terms - shift))), shift


def _doubling(limit: int):
    k = min(_START, limit)
    while True:
        yield k
        if k >= limit:
            return
        k = min(2 * k, limit)


def sum_1d(log_term: Callable[[np.ndarray], np.ndarray],
           log_tail: Callable[[int], float],
           *, tol: float = DEFAULT_TOL, budget: int = BUDGET_1D,
           first_index: int = 0) -> SeriesValue:
    """Sum exp(log_term(k)) over k >= first_index.

    ``log_tail(K)`` must return log of an upper bound on the sum over k >= K,
    or raise SeriesDivergenceError when it cannot certify one yet (for
    example before the terms enter their decreasing regime).
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    # a later failure cannot undo an earlier certified tail, so the last
    # success is kept
    last_error = None
    result = None
    for n in _doubling(budget):
        ks = np.arange(first_index, first_index + n, dtype=float)
        lt = np.asarray(log_term(ks), dtype=float)
        partial, shift = _stable_sum(lt)
        try:
            ltail = log_tail(first_index + n)
        except SeriesDivergenceError as exc:
            last_error = exc
            continue
        tail = math.exp(ltail - shift) if math.isfinite(ltail) else 0.0
        if not math.isfinite(tail):
            last_error = SeriesDivergenceError("tail bound overflowed")
            continue
        result = SeriesValue(partial, n, tail, tail <= tol * partial, shift)
        if result.converged:
            return result
    if result is None:
        raise last_error or SeriesDivergenceError("no certified tail within budget")
    return result


def log_power_series(log_c: float, a: float, beta: float, alpha: float = 1.0, *,
                     weight: Optional[str] = None, tol: float = DEFAULT_TOL,
                     budget: int = BUDGET_1D) -> SeriesValue:
    """sum_k w_k C L_k^a e^{-beta L_k}, L_k = ln(alpha k + e).

    weight=None gives w_k = 1.  weight="diag" gives w_k = k + 1, the number of
    lattice points (n, m) with n + m = k; then alpha must be 1 and the tail
    uses k + 1 <= k + e, which turns the shape into exponent beta - 1.
    """
    if weight == "diag":
        if alpha != 1.0:
            raise ValueError("diagonal weighting needs alpha = 1")
        eff_beta = beta - 1.0
    else:
        eff_beta = beta

    def log_term(k):
        L = np.log(alpha * k + math.e)
        out = log_c + a * np.log(L) - beta * L
        if weight == "diag":
            out = out + np.log(k + 1.0)
        return out

    def log_tail(K):
        if eff_beta <= 1.0:
            raise SeriesDivergenceError(
                f"terms decay like L^a (k+e)^-{eff_beta:.6g}; the series diverges")
        integral = log_power_tail(log_c, a, eff_beta, alpha, K - 1)
        # the integrand is decreasing once L >= a / eff_beta; before that it is
        # unimodal, and the sum exceeds the integral by at most the peak term
        L_peak = a / eff_beta
        if math.log(alpha * (K - 1) + math.e) < L_peak:
            log_peak = log_c + a * math.log(L_peak) - eff_beta * L_peak
            return float(np.logaddexp(integral, log_peak))
        return integral

    if eff_beta <= 1.0:
        raise SeriesDivergenceError(
            f"terms decay like L^a (k+e)^-{eff_beta:.6g}; the series diverges")
    return sum_1d(log_term, log_tail, tol=tol, budget=budget)


def generic_series_1d(log_f: Callable[[np.ndarray], np.ndarray], *,
                      tol: float = DEFAULT_TOL, budget: int = BUDGET_1D) -> SeriesValue:
    """Series of a term with a continuous extension log_f(x), x >= 0.

    The tail needs the last few terms strictly decreasing and is then bounded
    by int_{K-1}^inf f(x) dx.
    """

    def log_tail(K):
        probe = np.asarray(log_f(np.arange(K - _DECREASE_PROBES, K, dtype=float)))
        if K < _DECREASE_PROBES or not np.all(np.diff(probe) < 0):
            raise SeriesDivergenceError("terms are not decreasing")
        ref = float(probe[-1])
        val, err = integrate.quad(lambda x: math.exp(float(log_f(np.array([x]))[0]) - ref),
                                  K - 1, np.inf, limit=200)
        if not (math.isfinite(val) and val >= 0):
            raise SeriesDivergenceError("tail integral is not finite")
        return ref + math.log(val + abs(err)) if val + err > 0 else -math.inf

    return sum_1d(log_f, log_tail, tol=tol, budget=budget)


def sum_2d(log_term: Callable[[np.ndarray, np.ndarray], np.ndarray],
           log_tail: Callable[[int], float], *, tol: float = DEFAULT_TOL,
           budget: int = BUDGET_2D) -> SeriesValue:
    """Sum over the quadrant n, m >= 0 by growing squares [0, K)^2.

    ``log_tail(K)`` bounds the sum over the complement of the square.
    """
    kmax = max(int(math.isqrt(budget)), 1)
    last_error = None
    result = None
    for K in _doubling(kmax):
        ax = np.arange(K, dtype=float)
        lt = log_term(ax[:, None], ax[None, :])
        partial, shift = _stable_sum(lt)
        try:
            ltail = log_tail(K)
        except SeriesDivergenceError as exc:
            last_error = exc
            continue
        tail = math.exp(ltail - shift) if math.isfinite(ltail) else 0.0
        result = SeriesValue(partial, K * K, tail, tail <= tol * partial, shift)
        if result.converged:
            return result
    if result is None:
        raise last_error or SeriesDivergenceError("no certified tail within budget")
    return result


def product_log_series(log_c: float, q: float, beta: float, *, tol: float = DEFAULT_TOL,
                       budget: int = BUDGET_2D) -> SeriesValue:
    """sum_{n,m} C (A_n + B_m)^q e^{-beta (A_n + B_m)}, A_n = ln(n + e), B_m = ln(m + e)."""
    if beta <= 1.0:
        raise SeriesDivergenceError(f"double series needs beta > 1, got {beta:.6g}")

    def log_term(n, m):
        t = np.log(n + math.e) + np.log(m + math.e)
        return log_c + q * np.log(t) - beta * t

    def log_tail(K):
        # complement of the square lies in two strips {n >= K} and {m >= K};
        # each strip sum is below the integral over [K-1, inf) x [-1, inf)
        t0 = math.log(K - 1 + math.e) + math.log(math.e - 1.0)
        return math.log(2.0) + log_strip_tail(log_c, q, beta, t0)

    return sum_2d(log_term, log_tail, tol=tol, budget=budget)


def generic_series_2d(log_f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      decreasing_from: Callable[[int], bool], *, tol: float = DEFAULT_TOL,
                      budget: int = BUDGET_2D) -> SeriesValue:
    """Quadrant series for a term that decreases in each index beyond a region.

    ``decreasing_from(K)`` must confirm that the term is decreasing in both
    arguments on [K-1, inf) x [0, inf).  The strip {n >= K} is then bounded
    by int_{K-1}^inf [f(x, 0) + int_0^inf f(x, y) dy] dx, and likewise with
    the roles swapped.
    """

    def f(x, y, ref):
        return math.exp(float(log_f(np.array(x), np.array(y))) - ref)

    def log_tail(K):
        diag = np.arange(K - _DECREASE_PROBES, K, dtype=float)
        probe = np.asarray(log_f(diag, diag))
        if K < _DECREASE_PROBES or not np.all(np.diff(probe) < 0) or not decreasing_from(K):
            raise SeriesDivergenceError("terms are not decreasing")
        ref = float(log_f(np.array(K - 1.0), np.array(0.0)))
        edge, e1 = integrate.quad(lambda x: f(x, 0.0, ref), K - 1, np.inf, limit=200)
        body, e2 = integrate.dblquad(lambda y, x: f(x, y, ref), K - 1, np.inf, 0.0, np.inf)
        tot = edge + body + abs(e1) + abs(e2)
        if not math.isfinite(tot):
            raise SeriesDivergenceError("tail integral is not finite")
        return ref + math.log(2.0 * tot) if tot > 0 else -math.inf

    return sum_2d(log_f, log_tail, tol=tol, budget=budget)
