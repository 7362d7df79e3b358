"""Analytic upper bounds for P{sup_T |X| > eps} on compact rectangles.

The generic entropy bound works for any power modulus sigma(h) = C h^alpha
and a user-supplied covering function; the closed forms below it are its
mu -> 0 limits specialised to the max metric (unit square and scaled
rectangles) and to the Hoelder metric (origin rectangles with T_i >= 1 and
the square [1, 2]^2).

Every bound is assembled in log space and exponentiated once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .field_model import HurstPair, Rect
from .covering import covering_bound_rho1

UNDERFLOW = 1e-300
LOG_UNDERFLOW = math.log(UNDERFLOW)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Condition:
    name: str
    holds: bool


@dataclass
class BoundResult:
    family: str
    epsilon: float
    log_value: Optional[float]
    params: dict = field(default_factory=dict)
    validity: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(c.holds for c in self.validity) and self.log_value is not None

    @property
    def value(self) -> Optional[float]:
        if not self.valid:
            return None
        if self.log_value < LOG_UNDERFLOW:
            return 0.0
        return math.exp(self.log_value) if self.log_value < 709.0 else math.inf

    @property
    def vacuous(self) -> bool:
        return self.valid and self.log_value > 0.0

    @property
    def underflow(self) -> bool:
        return self.valid and self.log_value < LOG_UNDERFLOW

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.valid:
            out.append("invalid")
        if self.vacuous:
            out.append("vacuous")
        if self.underflow:
            out.append("underflow")
        return out

    def failed_conditions(self) -> list[str]:
        return [c.name for c in self.validity if not c.holds]


def make_result(family, eps, log_value, params, conditions=()) -> BoundResult:
    conds = [Condition(n, bool(ok)) for n, ok in conditions]
    if not all(c.holds for c in conds):
        log_value = None
    return BoundResult(family, float(eps), log_value, dict(params), conds)


def _check_p(p):
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")


def _check_eps(eps):
    if not (math.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be positive and finite, got {eps!r}")


# ---------------------------------------------------------------------------
# generic entropy bound


@dataclass
class GenericBoundInputs:
    sigma_c: float
    sigma_alpha: float
    gamma: float
    beta: float
    p: float
    mu: float
    entropy_fn: Callable[[float], float]
    lam: Optional[float] = None

    def __post_init__(self):
        _check_p(self.p)
        if not self.sigma_c > 0:
            raise ValueError("sigma_c must be positive")
        if not 0 < self.sigma_alpha <= 1:
            raise ValueError("sigma_alpha must lie in (0, 1]")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.mu < self.sigma_alpha / 2:
            raise ValueError("mu must lie in (0, alpha/2)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")


def power_sigma_inputs(T: float, sigma_c: float, sigma_alpha: float, gamma: float,
                       p: float, mu: float, lam: Optional[float] = None) -> GenericBoundInputs:
    """Inputs for sigma(h) = C h^alpha on [0, T]^2 under the max metric.

    The Chebyshev radius of the square is T/2, so beta = C (T/2)^alpha.
    """
    rect = Rect(T, T)
    return GenericBoundInputs(
        sigma_c=sigma_c, sigma_alpha=sigma_alpha, gamma=gamma,
        beta=sigma_c * (T / 2.0) ** sigma_alpha, p=p, mu=mu,
        entropy_fn=lambda u: covering_bound_rho1(rect, sigma_c, sigma_alpha, u),
        lam=lam,
    )


def log_entropy_factor(inp: GenericBoundInputs) -> float:
    """log of ((1/(beta p)) int_0^{beta p} N(u)^mu du)^{1/mu}.

    N(u)^mu blows up like u^{-2 mu/alpha} at 0; substituting u = beta p y^k
    with k = 1/(1 - 2 mu/alpha) flattens the singularity.
    """
    bp = inp.beta * inp.p
    mu = inp.mu
    k = 1.0 / (1.0 - 2.0 * mu / inp.sigma_alpha)

    def integrand(y):
        if y <= 0.0:
            # limit of k y^{k-1} (N(bp y^k))^mu as y -> 0 is finite for power covers
            y = 1e-300
        u = bp * y ** k
        return k * y ** (k - 1.0) * inp.entropy_fn(u) ** mu

    res = integrate.quad(integrand, 0.0, 1.0, epsrel=1e-9, epsabs=0.0, limit=200,
                         full_output=1)
    val, err = res[0], res[1]
    if len(res) > 3:
        # quad only appends a message when ier != 0
        raise QuadratureError(f"entropy integral: {res[3]}")
    if not (math.isfinite(val) and val > 0):
        raise QuadratureError(f"entropy integral returned {val} (error {err})")
    return math.log(val) / mu


def lambda_star(inp: GenericBoundInputs, eps: float) -> float:
    """Positive minimiser of the exponent in lambda."""
    p = inp.p
    return eps * (1 - p) / (inp.gamma ** 2 + inp.beta ** 2 * p / (1 - p))


def generic_bound_thm21(inp: GenericBoundInputs, eps: float) -> BoundResult:
    _check_eps(eps)
    if inp.lam is None:
        raise ValueError("the generic bound needs lambda; use optimized_bound_cor22 otherwise")
    lam, p = inp.lam, inp.p
    expo = (lam ** 2 * inp.gamma ** 2 / (2 * (1 - p))
            + p * lam ** 2 * inp.beta ** 2 / (2 * (1 - p) ** 2) - lam * eps)
    log_val = math.log(2.0) + expo + log_entropy_factor(inp)
    return make_result("thm21", eps, log_val, _generic_params(inp, lam=lam))


def optimized_bound_cor22(inp: GenericBoundInputs, eps: float) -> BoundResult:
    _check_eps(eps)
    p = inp.p
    expo = -eps ** 2 * (1 - p) / (2 * (inp.gamma ** 2 + inp.beta ** 2 * p / (1 - p)))
    log_val = math.log(2.0) + expo + log_entropy_factor(inp)
    return make_result("cor22", eps, log_val,
                       _generic_params(inp, lam=lambda_star(inp, eps)))


def _generic_params(inp, **extra):
    d = dict(sigma_c=inp.sigma_c, sigma_alpha=inp.sigma_alpha, gamma=inp.gamma,
             beta=inp.beta, p=inp.p, mu=inp.mu)
    d.update(extra)
    return d


# ---------------------------------------------------------------------------
# closed forms, max metric


def log_bound_power_sigma(sigma_c, sigma_alpha, T, gamma, p, eps) -> float:
    denom = gamma ** 2 + sigma_c ** 2 * T ** (2 * sigma_alpha) * p / (2 ** (2 * sigma_alpha) * (1 - p))
    return (math.log(8.0) - eps ** 2 * (1 - p) / (2 * denom)
            + (2.0 / sigma_alpha) * (1.0 - math.log(p)))


def bound_power_sigma(sigma_c: float, sigma_alpha: float, T: float, gamma: float,
                      p: float, eps: float) -> BoundResult:
    """8 exp{-eps^2 (1-p) / (2 (gamma^2 + C^2 T^{2a} p / (2^{2a} (1-p))))} (e/p)^{2/a}."""
    _check_p(p)
    _check_eps(eps)
    if not (T > 0 and sigma_c > 0 and 0 < sigma_alpha <= 1 and gamma >= 0):
        raise ValueError("need T > 0, C > 0, 0 < alpha <= 1, gamma >= 0")
    return make_result("eq9", eps, log_bound_power_sigma(sigma_c, sigma_alpha, T, gamma, p, eps),
                       dict(C=sigma_c, alpha=sigma_alpha, T=T, gamma=gamma, p=p))


def log_bound_unit_square_rho1(h: HurstPair, p: float, eps: float) -> float:
    H = h.h_min
    return (math.log(8.0) - eps ** 2 * (1 - p) / (2 * (1 + 4 * p / (2 ** (2 * H) * (1 - p))))
            + (2.0 / H) * (1.0 - math.log(p)))


def bound_unit_square_rho1(h: HurstPair, p: float, eps: float) -> BoundResult:
    _check_p(p)
    _check_eps(eps)
    return make_result("eq10", eps, log_bound_unit_square_rho1(h, p, eps),
                       dict(h1=h.h1, h2=h.h2, H=h.h_min, p=p))


def bound_rect_scaled(h: HurstPair, rect: Rect, p: float, eps: float) -> BoundResult:
    """Bound for sup |X| / (T1^H1 T2^H2) over [0, T1] x [0, T2].

    Scaling the rectangle onto the unit square changes the field only by that
    factor, so the normalised bound is the unit-square one.  To bound the raw
    sup at level eps', pass eps = eps' / rect.scale(h).
    """
    _check_p(p)
    _check_eps(eps)
    if not rect.at_origin:
        raise ValueError("the scaling bound needs a rectangle anchored at the origin")
    return make_result("eq11", eps, log_bound_unit_square_rho1(h, p, eps),
                       dict(h1=h.h1, h2=h.h2, T1=rect.t1_max, T2=rect.t2_max, p=p,
                            scale=rect.scale(h)))


def log_bound_unit_square_eps(h: HurstPair, eps: float) -> float:
    H = h.h_min
    return (math.log(8.0) + 2.0 / H + 0.5 + (4.0 / H) * math.log(eps)
            - 3 * eps ** 2 / (2 * (4 ** (1 - H) + 3)))


def bound_unit_square_eps(h: HurstPair, eps: float) -> BoundResult:
    _check_eps(eps)
    return make_result("eq12", eps, log_bound_unit_square_eps(h, eps),
                       dict(h1=h.h1, h2=h.h2, H=h.h_min), [("eps > 2", eps > 2)])


# ---------------------------------------------------------------------------
# closed forms, Hoelder metric


def _check_big_rect(rect: Rect):
    if not rect.at_origin:
        raise ValueError("rectangle must be anchored at the origin")
    if rect.t1_max < 1 or rect.t2_max < 1:
        raise ValueError("this bound needs T1 >= 1 and T2 >= 1")


def log_bound_rect_rho2(h: HurstPair, rect: Rect, p: float, eps: float) -> float:
    T1, T2 = rect.t1_max, rect.t2_max
    G = T1 ** (2 * h.h1) * T2 ** (2 * h.h2)
    te = h.t_eta(T1, T2)
    denom = G + (p / (1 - p)) * 4 ** (1 - h.h_min) * te ** 4
    return (math.log(h.n1 * h.n2) + h.q * (1.0 - math.log(p))
            - eps ** 2 * (1 - p) / (2 * denom))


def bound_rect_rho2(h: HurstPair, rect: Rect, p: float, eps: float) -> BoundResult:
    _check_p(p)
    _check_eps(eps)
    _check_big_rect(rect)
    return make_result("eq15", eps, log_bound_rect_rho2(h, rect, p, eps),
                       dict(h1=h.h1, h2=h.h2, T1=rect.t1_max, T2=rect.t2_max, p=p,
                            T_eta=h.t_eta(rect.t1_max, rect.t2_max)))


def log_bound_rect_rho2_eps(h: HurstPair, rect: Rect, eps: float) -> float:
    T1, T2 = rect.t1_max, rect.t2_max
    G = T1 ** (2 * h.h1) * T2 ** (2 * h.h2)
    te = h.t_eta(T1, T2)
    a = 4 ** (1 - h.h_min)
    return (math.log(h.n1 * h.n2) + 2 * h.q * math.log(eps)
            + h.q + 3.0 / (2 * G * (3 + a))
            - 3 * eps ** 2 / (2 * (3 * G + a * te ** 4)))


def bound_rect_rho2_eps(h: HurstPair, rect: Rect, eps: float) -> BoundResult:
    _check_eps(eps)
    _check_big_rect(rect)
    return make_result("eq16", eps, log_bound_rect_rho2_eps(h, rect, eps),
                       dict(h1=h.h1, h2=h.h2, T1=rect.t1_max, T2=rect.t2_max),
                       [("eps > 2", eps > 2)])


def log_bound_square12_rho2(h: HurstPair, p: float, eps: float) -> float:
    b = (1 + 2 ** abs(h.h1 - h.h2)) ** 2
    denom = 4 ** h.h_sum + b * p / (1 - p)
    return (math.log(h.n1 * h.n2) + h.q * (1.0 - math.log(p))
            - eps ** 2 * (1 - p) / (2 * denom))


def bound_square12_rho2(h: HurstPair, p: float, eps: float) -> BoundResult:
    _check_p(p)
    _check_eps(eps)
    return make_result("eq17", eps, log_bound_square12_rho2(h, p, eps),
                       dict(h1=h.h1, h2=h.h2, p=p))


def square12_c1(h: HurstPair) -> float:
    return h.n1 * h.n2 * math.exp(h.q + 1.0 / (2 * (4 ** h.h_sum + 1)))


def square12_c2(h: HurstPair) -> float:
    H = h.h_min
    return 3.0 / (2 * 4 ** h.h_max * (3 * 4 ** H + 4 ** (1 - H)))


def log_bound_square12_eps(h: HurstPair, eps: float) -> float:
    return math.log(square12_c1(h)) + 2 * h.q * math.log(eps) - square12_c2(h) * eps ** 2


def bound_square12_eps(h: HurstPair, eps: float) -> BoundResult:
    _check_eps(eps)
    return make_result("eq18", eps, log_bound_square12_eps(h, eps),
                       dict(h1=h.h1, h2=h.h2), [("eps > 2", eps > 2)])


# parametric families keyed by id: (log-bound(h, rect, p, eps), domain check)
def _rect_or_unit(rect):
    return rect if rect is not None else Rect.unit()


PARAMETRIC = {
    "eq10": lambda h, rect, p, eps: log_bound_unit_square_rho1(h, p, eps),
    "eq15": lambda h, rect, p, eps: log_bound_rect_rho2(h, _rect_or_unit(rect), p, eps),
    "eq17": lambda h, rect, p, eps: log_bound_square12_rho2(h, p, eps),
}


def evaluate_family(family: str, h: HurstPair, eps: float, *, rect: Optional[Rect] = None,
                    p: Optional[float] = None, **kw) -> BoundResult:
    """Dispatch by family id for the compact-domain bounds."""
    rect = _rect_or_unit(rect)
    if family == "eq9":
        T = kw.get("T", rect.t1_max)
        return bound_power_sigma(kw.get("C", 2.0), kw.get("alpha", h.h_min), T,
                                 kw.get("gamma", 1.0), p, eps)
    if family == "eq10":
        return bound_unit_square_rho1(h, p, eps)
    if family == "eq11":
        return bound_rect_scaled(h, rect, p, eps)
    if family == "eq12":
        return bound_unit_square_eps(h, eps)
    if family == "eq15":
        return bound_rect_rho2(h, rect, p, eps)
    if family == "eq16":
        return bound_rect_rho2_eps(h, rect, eps)
    if family == "eq17":
        return bound_square12_rho2(h, p, eps)
    if family == "eq18":
        return bound_square12_eps(h, eps)
    raise KeyError(f"unknown compact-domain family {family!r}")


def eps_grid_is_ascending(eps_list) -> bool:
    a = np.asarray(eps_list, dtype=float)
    return a.size > 0 and bool(np.all(np.diff(a) > 0))
