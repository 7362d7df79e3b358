"""Choice of the free parameter p in the parametric bounds, and family selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logit

from . import bounds as B
from .field_model import HurstPair, Rect

P_LO, P_HI = 1e-6, 1.0 - 1e-6
XTOL = 1e-9
N_PRESCAN = 64
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_CONSISTENCY_RTOL = 1e-6

PARAMETRIC_FAMILIES = ("eq9", "eq10", "eq15", "eq17")


@dataclass
class OptimizationReport:
    best_p: Optional[float]
    best_value: float
    evaluations: int
    bracket: tuple
    compared_families: list = field(default_factory=list)
    family: str = ""
    log_value: float = math.nan
    source: str = "golden"


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   xtol: float = XTOL) -> tuple[float, float, int]:
    """Minimise f on [lo, hi] until the bracket is narrower than xtol (absolute).

    scipy.optimize.golden stops on a relative tolerance, which for brackets
    near p = 1e-6 is a different criterion; this loop keeps the absolute one.
    """
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        n += 1
    if fc <= fd:
        return c, fc, n
    return d, fd, n


def _log_family(family: str, h: HurstPair, domain: Rect, eps: float, **kw) -> Callable[[float], float]:
    if family == "eq9":
        if not domain.at_origin or domain.t1_max != domain.t2_max:
            raise ValueError("eq9 needs a square [0, T]^2")
        C = kw.get("sigma_c", 2.0)
        alpha = kw.get("sigma_alpha", h.h_min)
        gamma = kw.get("gamma", 1.0)
        T = domain.t1_max
        return lambda p: B.log_bound_power_sigma(C, alpha, T, gamma, p, eps)
    if family == "eq10":
        if not domain.is_unit:
            raise ValueError("eq10 is the unit-square bound")
        return lambda p: B.log_bound_unit_square_rho1(h, p, eps)
    if family == "eq15":
        B._check_big_rect(domain)
        return lambda p: B.log_bound_rect_rho2(h, domain, p, eps)
    if family == "eq17":
        if not domain.is_square12:
            raise ValueError("eq17 is the [1, 2]^2 bound")
        return lambda p: B.log_bound_square12_rho2(h, p, eps)
    raise ValueError(f"family {family!r} has no free p; choose one of {PARAMETRIC_FAMILIES}")


def anchor_points(eps: float) -> list[float]:
    pts = [0.5, 0.1]
    if eps > 1.0:
        pts.insert(0, 1.0 / eps ** 2)
    return [p for p in pts if P_LO <= p <= P_HI]


def optimize_p(family: str, h: HurstPair, domain: Rect, eps: float, **kw) -> OptimizationReport:
    """Minimise the family's bound over p in [1e-6, 1 - 1e-6].

    A 64-point logit-spaced scan picks the bracket for golden section.  The
    result is the best of the golden point, the scan minimum and the anchors
    p = 1/eps^2, 0.5, 0.1, so it never loses to any of them.
    """
    if not (math.isfinite(eps) and eps > 0):
        raise ValueError("eps must be positive")
    logf = _log_family(family, h, domain, eps, **kw)
    grid = expit(np.linspace(logit(P_LO), logit(P_HI), N_PRESCAN))
    vals = np.array([logf(float(p)) for p in grid])
    i = int(np.argmin(vals))
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, N_PRESCAN - 1)])
    pg, fg, n = golden_section(logf, lo, hi)
    evals = N_PRESCAN + n
    source = "golden"
    best_p, best_log = pg, fg
    # golden must agree with the scan; otherwise fall back to the scan point
    if fg > vals[i] + math.log1p(_CONSISTENCY_RTOL):
        best_p, best_log, source = float(grid[i]), float(vals[i]), "prescan"
    elif vals[i] < best_log:
        best_p, best_log, source = float(grid[i]), float(vals[i]), "prescan"
    for p in anchor_points(eps):
        lv = logf(p)
        evals += 1
        if lv < best_log:
            best_p, best_log, source = p, lv, "anchor"
    value = 0.0 if best_log < B.LOG_UNDERFLOW else (math.exp(best_log) if best_log < 709 else math.inf)
    return OptimizationReport(best_p, value, evals, (lo, hi), [(family, value)], family,
                              best_log, source)


def _row(name: str, res: B.BoundResult):
    return (name, res.value if res.valid else None)


def best_bound(h: HurstPair, domain: Rect, eps: float) -> OptimizationReport:
    """Every applicable family at its best p, plus the closed forms; the minimum wins.

    Supported domains: [0, 1]^2, origin rectangles [0, T1] x [0, T2] and
    [1, 2]^2.  Max-metric bounds reach any origin rectangle through the
    scaling identity; Hoelder-metric bounds need T_i >= 1.  [1, 2]^2 also
    inherits every bound for its superset [0, 2]^2.
    """
    if not (math.isfinite(eps) and eps > 0):
        raise ValueError("eps must be positive")
    rows: list = []
    reports: dict = {}
    evals = 0

    def add_opt(name, family, dom, e):
        nonlocal evals
        rep = optimize_p(family, h, dom, e)
        evals += rep.evaluations
        reports[name] = rep
        rows.append((name, rep.best_value))

    def add_fixed(name, res):
        nonlocal evals
        evals += 1
        reports[name] = res
        rows.append(_row(name, res))

    def origin_rect_families(rect: Rect, prefix: str = ""):
        scale = rect.scale(h)
        if rect.is_unit:
            add_opt(prefix + "eq10", "eq10", rect, eps)
            add_fixed(prefix + "eq12", B.bound_unit_square_eps(h, eps))
        else:
            add_opt(prefix + "eq11", "eq10", Rect.unit(), eps / scale)
            add_fixed(prefix + "eq11+eq12", B.bound_unit_square_eps(h, eps / scale))
        if rect.t1_max >= 1 and rect.t2_max >= 1:
            add_opt(prefix + "eq15", "eq15", rect, eps)
            add_fixed(prefix + "eq16", B.bound_rect_rho2_eps(h, rect, eps))

    if domain.is_square12:
        add_opt("eq17", "eq17", domain, eps)
        add_fixed("eq18", B.bound_square12_eps(h, eps))
        origin_rect_families(Rect(2.0, 2.0), prefix="[0,2]^2:")
    elif domain.at_origin:
        origin_rect_families(domain)
    else:
        raise ValueError(f"unsupported domain {domain}")

    # rank on log values so that underflowed bounds still order correctly
    valid = [(n, v) for n, v in rows if v is not None]
    name, value = min(valid, key=lambda r: reports[r[0]].log_value)
    win = reports[name]
    if isinstance(win, OptimizationReport):
        best_p, bracket, log_value = win.best_p, win.bracket, win.log_value
    else:
        best_p, bracket, log_value = None, (None, None), win.log_value
    return OptimizationReport(best_p, value, evals, bracket, rows, name, log_value,
                              "best_bound")
