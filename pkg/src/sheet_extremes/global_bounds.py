"""Series bounds for normalised suprema over unbounded domains.

Over the whole quadrant the field is normalised by (t1 v t2)^{H1+H2} c(t1 v t2)
and the domain is cut into shells b_k <= t1 v t2 <= b_{k+1} (and their
reciprocals); each shell reduces to the unit-square bound by self-similarity.
Over [1, inf)^2 the normaliser is t1^H1 t2^H2 phi(t) and the cells are dyadic
boxes, each reduced to the [1, 2]^2 bound.

The "corollary" versions trade the exact series for a product form using
x + y <= x y when x, y >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bounds import BoundResult, make_result, square12_c1, square12_c2
from .field_model import HurstPair
from .series import (
    BUDGET_1D,
    BUDGET_2D,
    DEFAULT_TOL,
    SeriesDivergenceError,
    SeriesValue,
    generic_series_1d,
    generic_series_2d,
    log_power_series,
    product_log_series,
)

# relative slack for comparisons against infimum-derived quantities
_SLACK = 1e-12


# ---------------------------------------------------------------------------
# ingredients


@dataclass(frozen=True)
class GrowthSchedule:
    """k -> b_k with b_0 = 1, strictly increasing to infinity.

    ``ratio`` is set for geometric schedules b_k = r^k, which unlocks the
    closed-form series tails.  ``log_fn`` (k -> ln b_k) keeps fast-growing
    schedules finite far beyond the point where b_k overflows.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    ratio: Optional[float] = None
    log_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def geometric(cls, r: float) -> "GrowthSchedule":
        if not r > 1:
            raise ValueError("geometric schedule needs r > 1")
        lr = math.log(r)
        return cls(f"geometric:{r:g}", lambda k: np.exp(lr * np.asarray(k, dtype=float)), r,
                   lambda k: lr * np.asarray(k, dtype=float))

    @classmethod
    def exponential(cls) -> "GrowthSchedule":
        return cls("exp", lambda k: np.exp(np.asarray(k, dtype=float)), math.e,
                   lambda k: np.asarray(k, dtype=float))

    def log_b(self, k) -> np.ndarray:
        if self.log_fn is not None:
            return self.log_fn(k)
        return np.log(self.fn(k))

    def __call__(self, k):
        return self.fn(k)

    def log_ratio(self, k) -> np.ndarray:
        """ln(b_k / b_{k+1})."""
        if self.ratio is not None:
            return np.full(np.shape(k), -math.log(self.ratio))
        k = np.asarray(k, dtype=float)
        return self.log_b(k) - self.log_b(k + 1)

    def check(self, n_probe: int = 64):
        b = np.asarray(self.fn(np.arange(n_probe + 1, dtype=float)), dtype=float)
        if not abs(b[0] - 1.0) <= 1e-15:
            raise ValueError(f"schedule must start at b_0 = 1, got {b[0]}")
        if not np.all(np.diff(b) > 0):
            raise ValueError("schedule must be strictly increasing")


@dataclass(frozen=True)
class Normalizer:
    """c on (0, inf), increasing on [1, inf) with c(1/t) = c(t).

    ``of_log`` is the same function written in ln t, if available.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    of_log: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def loglog(cls) -> "Normalizer":
        def of_log(lt):
            return np.sqrt(np.log(np.abs(np.asarray(lt, dtype=float)) + math.e))
        return cls("loglog", lambda t: of_log(np.log(np.asarray(t, dtype=float))), of_log)

    @classmethod
    def constant(cls, value: float = 1.0) -> "Normalizer":
        return cls(f"const:{value:g}", lambda t: np.full(np.shape(t), float(value)),
                   lambda lt: np.full(np.shape(lt), float(value)))

    def __call__(self, t):
        return self.fn(t)

    def check(self, samples=None):
        t = np.geomspace(1.0, 1e6, 50) if samples is None else np.asarray(samples, dtype=float)
        c = np.asarray(self.fn(t))
        if not np.all(c > 0):
            raise ValueError("normalizer must be positive")
        if not np.all(np.diff(c) >= 0):
            raise ValueError("normalizer must be increasing on [1, inf)")
        if not np.allclose(self.fn(1.0 / t), c, rtol=1e-12, atol=0):
            raise ValueError("normalizer must satisfy c(1/t) = c(t)")


@dataclass(frozen=True)
class WeightFn:
    """phi on [1, inf)^2, increasing in each coordinate.

    ``kind`` is "phi1" (depends on x1 x2), "phi2" (sum of per-axis terms) or
    "custom".  The built-ins carry an optional sqrt(2 + delta) prefactor;
    without delta the prefactor is 1.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dyadic: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kind: str = "custom"
    prefactor: float = 1.0

    @classmethod
    def phi1(cls, delta: Optional[float] = None) -> "WeightFn":
        pre = 1.0 if delta is None else math.sqrt(2.0 + delta)

        def fn(x1, x2):
            return pre * np.sqrt(np.log(np.log2(np.asarray(x1, float) * np.asarray(x2, float)) + math.e))

        def dyadic(n, m):
            return pre * np.sqrt(np.log(np.asarray(n, float) + np.asarray(m, float) + math.e))

        return cls("phi1", fn, dyadic, "phi1", pre)

    @classmethod
    def phi2(cls, delta: Optional[float] = None) -> "WeightFn":
        pre = 1.0 if delta is None else math.sqrt(2.0 + delta)

        def fn(x1, x2):
            return pre * np.sqrt(np.log(math.e + np.log2(np.asarray(x1, float)))
                                 + np.log(math.e + np.log2(np.asarray(x2, float))))

        def dyadic(n, m):
            return pre * np.sqrt(np.log(np.asarray(n, float) + math.e)
                                 + np.log(np.asarray(m, float) + math.e))

        return cls("phi2", fn, dyadic, "phi2", pre)

    @classmethod
    def custom(cls, name: str, fn) -> "WeightFn":
        def dyadic(n, m):
            return fn(np.exp2(np.asarray(n, float)), np.exp2(np.asarray(m, float)))
        return cls(name, fn, dyadic, "custom", 1.0)

    def __call__(self, x1, x2):
        return self.fn(x1, x2)

    @property
    def at_one(self) -> float:
        return float(self.fn(1.0, 1.0))


@dataclass
class MProbe:
    value: float
    argmin: int
    stabilized: bool


def _w_terms(h: HurstPair, sched: GrowthSchedule, c: Normalizer, k) -> np.ndarray:
    """w_k = (b_k / b_{k+1})^{H1+H2} c(b_k)."""
    k = np.asarray(k, dtype=float)
    if c.of_log is not None:
        cb = c.of_log(sched.log_b(k))
    else:
        cb = c(sched(k))
    return np.exp(h.h_sum * sched.log_ratio(k)) * cb


def schedule_m_constant(h: HurstPair, sched: GrowthSchedule, c: Normalizer,
                        k_probe: int = 256) -> MProbe:
    """inf over k <= k_probe of w_k, flagged unstable if the last quarter moved it."""
    if k_probe < 16:
        raise ValueError("k_probe must be at least 16")
    w = _w_terms(h, sched, c, np.arange(k_probe + 1))
    i = int(np.argmin(w))
    m = float(w[i])
    if not m > 0:
        raise ValueError("the infimum of w_k is not positive")
    return MProbe(m, i, i < (3 * (k_probe + 1)) // 4)


# ---------------------------------------------------------------------------
# whole quadrant


def thm35_rate(h: HurstPair) -> float:
    """3 / (2 (4^{1-H} + 3)), the unit-square exponent rate."""
    return 3.0 / (2.0 * (4 ** (1 - h.h_min) + 3.0))


def cor36_u(h: HurstPair, m: float) -> float:
    return 3.0 * m * m / (4.0 * (4 ** (1 - h.h_min) + 3.0))


def cor36_threshold(h: HurstPair, m: float) -> float:
    """The eps at which u eps^2 = 2."""
    return (2.0 / m) * math.sqrt(2.0 * (4 ** (1 - h.h_min) + 3.0) / 3.0)


def _is_closed_form(sched: GrowthSchedule, c: Normalizer) -> bool:
    return sched.ratio is not None and c.name == "loglog"


def global_bound_thm35(h: HurstPair, sched: GrowthSchedule, c: Normalizer, eps: float,
                       tol: float = DEFAULT_TOL, *, budget: int = BUDGET_1D,
                       k_probe: int = 256) -> tuple[BoundResult, Optional[SeriesValue]]:
    """16 e^{2/H + 1/2} eps^{4/H} sum_k exp(-A eps^2 w_k^2) w_k^{4/H}."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    H = h.h_min
    mp = schedule_m_constant(h, sched, c, k_probe)
    M = mp.value
    A = thm35_rate(h)
    params = dict(h1=h.h1, h2=h.h2, schedule=sched.name, normalizer=c.name, M=M,
                  M_stabilized=mp.stabilized, threshold=2.0 / M, tol=tol)
    conds = [("eps > 2/M", eps > 2.0 / M)]
    if eps <= 2.0 / M:
        return make_result("eq13", eps, None, params, conds), None
    if _is_closed_form(sched, c):
        rho = sched.ratio ** (-h.h_sum)
        series = log_power_series((4.0 / H) * math.log(rho), 2.0 / H, A * eps ** 2 * rho ** 2,
                                  math.log(sched.ratio), tol=tol, budget=budget)
    else:
        def log_f(k):
            w = _w_terms(h, sched, c, k)
            return -A * eps ** 2 * w ** 2 + (4.0 / H) * np.log(w)
        series = generic_series_1d(log_f, tol=tol, budget=budget)
    log_val = (math.log(16.0) + 2.0 / H + 0.5 + (4.0 / H) * math.log(eps) + series.log_total)
    params.update(series_converged=series.converged, terms=series.terms_used)
    return make_result("eq13", eps, log_val, params, conds), series


def global_bound_cor36(h: HurstPair, sched: GrowthSchedule, c: Normalizer, eps: float,
                       tol: float = DEFAULT_TOL, *, budget: int = BUDGET_1D,
                       k_probe: int = 256) -> tuple[BoundResult, Optional[SeriesValue]]:
    """16 sqrt(e) (e/2)^{2/H} eps^{4/H} (sum_k v_k^{2/H} e^{-v_k}) M^{4/H} e^{-u eps^2}.

    v_k = 2 (w_k / M)^2 and u = 3 M^2 / (4 (4^{1-H} + 3)).  The constant in
    front is sqrt(e): it comes from the e^{1/2} of the unit-square bound.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    H = h.h_min
    mp = schedule_m_constant(h, sched, c, k_probe)
    M = mp.value
    u = cor36_u(h, M)
    v_probe = 2.0 * (_w_terms(h, sched, c, np.arange(k_probe + 1)) / M) ** 2
    params = dict(h1=h.h1, h2=h.h2, schedule=sched.name, normalizer=c.name, M=M,
                  M_stabilized=mp.stabilized, u=u, threshold=cor36_threshold(h, M), tol=tol)
    conds = [("u eps^2 > 2", u * eps ** 2 > 2.0),
             ("v_k >= 2", bool(np.all(v_probe >= 2.0 * (1 - _SLACK))))]
    if not all(ok for _, ok in conds):
        return make_result("eq14", eps, None, params, conds), None
    if _is_closed_form(sched, c):
        rho = sched.ratio ** (-h.h_sum)
        beta = 2.0 * rho ** 2 / M ** 2
        series = log_power_series((2.0 / H) * math.log(beta), 2.0 / H, beta,
                                  math.log(sched.ratio), tol=tol, budget=budget)
    else:
        def log_f(k):
            v = 2.0 * (_w_terms(h, sched, c, k) / M) ** 2
            return (2.0 / H) * np.log(v) - v
        series = generic_series_1d(log_f, tol=tol, budget=budget)
    log_val = (math.log(16.0) + 0.5 + (2.0 / H) * (1.0 - math.log(2.0))
               + (4.0 / H) * math.log(eps) + series.log_total
               + (4.0 / H) * math.log(M) - u * eps ** 2)
    params.update(series_converged=series.converged, terms=series.terms_used)
    return make_result("eq14", eps, log_val, params, conds), series


def example1_constants(h: HurstPair) -> dict:
    s = h.h_sum
    return dict(M=math.exp(-s), u=3.0 * math.exp(-2 * s) / (4.0 * (4 ** (1 - h.h_min) + 3.0)))


def example1_v(k) -> np.ndarray:
    return 2.0 * np.log(np.asarray(k, dtype=float) + math.e)


def example1_bound(h: HurstPair, eps: float, tol: float = DEFAULT_TOL, *,
                   budget: int = BUDGET_1D) -> tuple[BoundResult, Optional[SeriesValue]]:
    """b_k = e^k, c(t) = sqrt(ln(|ln t| + e)):

    16 sqrt(e) e^{2/H} eps^{4/H} e^{-4(H1+H2)/H} (sum_k ln(k+e)^{2/H} / (k+e)^2) e^{-u eps^2}.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    H = h.h_min
    k = example1_constants(h)
    u = k["u"]
    params = dict(h1=h.h1, h2=h.h2, M=k["M"], u=u, threshold=cor36_threshold(h, k["M"]), tol=tol)
    conds = [("u eps^2 > 2", u * eps ** 2 > 2.0)]
    if u * eps ** 2 <= 2.0:
        return make_result("ex1", eps, None, params, conds), None
    series = log_power_series(0.0, 2.0 / H, 2.0, 1.0, tol=tol, budget=budget)
    log_val = (math.log(16.0) + 0.5 + 2.0 / H + (4.0 / H) * math.log(eps)
               - 4.0 * h.h_sum / H + series.log_total - u * eps ** 2)
    params.update(series_converged=series.converged, terms=series.terms_used)
    return make_result("ex1", eps, log_val, params, conds), series


# ---------------------------------------------------------------------------
# [1, inf)^2


def _phi_series(h: HurstPair, phi: WeightFn, beta_per_phi2: float, log_weight_scale: float,
                tol: float, budget_1d: int, budget_2d: int) -> SeriesValue:
    """sum_{n,m} phi^{2Q} exp(-beta_per_phi2 phi^2) at (2^n, 2^m), times e^{log_weight_scale}."""
    q = h.q
    pre2 = phi.prefactor ** 2
    log_c = q * math.log(pre2) + log_weight_scale
    if phi.kind == "phi1":
        # phi^2 = pre^2 ln(n + m + e): collapse onto s = n + m with multiplicity s + 1
        return log_power_series(log_c, q, beta_per_phi2 * pre2, 1.0, weight="diag",
                                tol=tol, budget=budget_1d)
    if phi.kind == "phi2":
        return product_log_series(log_c, q, beta_per_phi2 * pre2, tol=tol, budget=budget_2d)

    def log_f(n, m):
        p2 = phi.dyadic(n, m) ** 2
        return log_weight_scale + q * np.log(p2) - beta_per_phi2 * p2

    def decreasing_from(K):
        # phi^{2Q} e^{-c phi^2} decreases in phi once phi^2 >= Q / c
        return float(phi.dyadic(np.array(K - 1.0), np.array(0.0))) ** 2 >= q / beta_per_phi2 and \
            float(phi.dyadic(np.array(0.0), np.array(K - 1.0))) ** 2 >= q / beta_per_phi2

    return generic_series_2d(log_f, decreasing_from, tol=tol, budget=budget_2d)


def quadrant_bound_thm47(h: HurstPair, phi: WeightFn, eps: float, tol: float = DEFAULT_TOL, *,
                         budget_1d: int = BUDGET_1D, budget_2d: int = BUDGET_2D
                         ) -> tuple[BoundResult, Optional[SeriesValue]]:
    """C1 eps^{2Q} sum_{n,m} phi^{2Q}(2^n, 2^m) exp(-C2 eps^2 phi^2(2^n, 2^m))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    c1, c2 = square12_c1(h), square12_c2(h)
    p1 = phi.at_one
    params = dict(h1=h.h1, h2=h.h2, phi=phi.name, phi_at_one=p1, C1=c1, C2=c2,
                  threshold=2.0 / p1, tol=tol)
    conds = [("eps > 2/phi(1,1)", eps > 2.0 / p1)]
    if eps <= 2.0 / p1:
        return make_result("eq20", eps, None, params, conds), None
    series = _phi_series(h, phi, c2 * eps ** 2, 0.0, tol, budget_1d, budget_2d)
    log_val = math.log(c1) + 2 * h.q * math.log(eps) + series.log_total
    params.update(series_converged=series.converged, terms=series.terms_used)
    return make_result("eq20", eps, log_val, params, conds), series


def cor48_u(h: HurstPair, kappa: float) -> float:
    return square12_c2(h) * kappa ** 2 / 2.0


def cor48_threshold(h: HurstPair, kappa: float) -> float:
    """The eps at which u eps^2 = 2."""
    return 2.0 / (kappa * math.sqrt(square12_c2(h)))


def quadrant_bound_cor48(h: HurstPair, phi: WeightFn, eps: float, tol: float = DEFAULT_TOL, *,
                         kappa: Optional[float] = None, budget_1d: int = BUDGET_1D,
                         budget_2d: int = BUDGET_2D, family: str = "eq21-proofform"
                         ) -> tuple[BoundResult, Optional[SeriesValue]]:
    """C1 eps^{2Q} e^{-u eps^2} sum_{n,m} phi^{2Q}(2^n, 2^m) e^{-v_{n,m}}.

    u = C2 kappa^2 / 2 and v = 2 phi^2 / kappa^2.  The reference level kappa
    defaults to phi(1, 1); any kappa <= min phi keeps v >= 2 and gives a
    valid bound.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    c1 = square12_c1(h)
    p1 = phi.at_one
    kappa = p1 if kappa is None else float(kappa)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    u = cor48_u(h, kappa)
    params = dict(h1=h.h1, h2=h.h2, phi=phi.name, phi_at_one=p1, kappa=kappa, C1=c1,
                  C2=square12_c2(h), u=u, threshold=cor48_threshold(h, kappa), tol=tol)
    # phi is increasing, so its minimum over the dyadic lattice is phi(1, 1)
    conds = [("u eps^2 > 2", u * eps ** 2 > 2.0),
             ("v_nm >= 2", 2.0 * p1 ** 2 / kappa ** 2 >= 2.0 * (1 - _SLACK)),
             ("eps > 2/phi(1,1)", eps > 2.0 / p1)]
    if not all(ok for _, ok in conds):
        return make_result(family, eps, None, params, conds), None
    series = _phi_series(h, phi, 2.0 / kappa ** 2, 0.0, tol, budget_1d, budget_2d)
    log_val = math.log(c1) + 2 * h.q * math.log(eps) - u * eps ** 2 + series.log_total
    params.update(series_converged=series.converged, terms=series.terms_used)
    return make_result(family, eps, log_val, params, conds), series


def example2_series_terms(h: HurstPair, which: str, n, m) -> np.ndarray:
    """Printed summands: ln(n+m+e)^Q/(n+m+e)^2 or ln((n+e)(m+e))^Q/((n+e)^2 (m+e)^2)."""
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    if which == "phi1":
        s = n + m + math.e
        return np.log(s) ** h.q / s ** 2
    if which == "phi2":
        a, b = n + math.e, m + math.e
        return np.log(a * b) ** h.q / (a ** 2 * b ** 2)
    raise ValueError(f"unknown weight {which!r}")


def cor48_series_terms(h: HurstPair, phi: WeightFn, n, m, kappa: Optional[float] = None):
    """phi^{2Q}(2^n, 2^m) e^{-v_{n,m}} evaluated straight from phi."""
    kappa = phi.at_one if kappa is None else kappa
    p = phi.fn(np.exp2(np.asarray(n, float)), np.exp2(np.asarray(m, float)))
    return p ** (2 * h.q) * np.exp(-2.0 * p ** 2 / kappa ** 2)


def example2_bounds(h: HurstPair, which: str, eps: float, tol: float = DEFAULT_TOL, *,
                    budget_1d: int = BUDGET_1D, budget_2d: int = BUDGET_2D
                    ) -> tuple[BoundResult, Optional[SeriesValue]]:
    """C1 eps^{2Q} e^{-C2 eps^2 / 2} times the printed series.

    The built-in weights without delta are used with reference level 1, which
    is what makes the printed series come out: e^{-2 phi^2}.
    """
    phi = {"phi1": WeightFn.phi1, "phi2": WeightFn.phi2}[which]()
    return quadrant_bound_cor48(h, phi, eps, tol, kappa=1.0, budget_1d=budget_1d,
                                budget_2d=budget_2d, family="ex2")


__all__ = [
    "GrowthSchedule", "Normalizer", "WeightFn", "MProbe", "SeriesDivergenceError",
    "schedule_m_constant", "global_bound_thm35", "global_bound_cor36", "example1_bound",
    "example1_constants", "example1_v", "quadrant_bound_thm47", "quadrant_bound_cor48",
    "example2_bounds", "example2_series_terms", "cor48_series_terms", "cor36_threshold",
    "cor36_u", "cor48_u", "cor48_threshold", "thm35_rate",
]
