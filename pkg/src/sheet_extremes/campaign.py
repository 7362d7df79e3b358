"""Family dispatch and the certification, verification and report campaigns.

These are the library-level versions of the CLI commands; the CLI only
parses flags and writes the rows returned here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import bounds as B
from . import global_bounds as G
from .covering import HolderMetric, MaxMetric, covering_bound_rho1, covering_bound_rho2, \
    packing_oracle
from .field_model import HurstPair, Rect
from .optimizer import best_bound, optimize_p
from .series import DEFAULT_TOL, SeriesDivergenceError
from .simulator import Grid2, McConfig, SheetSampler, path_maxima, quadrant_normalizer, \
    tail_estimates, verify_model_identities, weight_normalizer

SCHEMA_VERSION = 1

COMPACT_FAMILIES = ("eq9", "eq10", "eq11", "eq12", "eq15", "eq16", "eq17", "eq18")
QUADRANT_FAMILIES = ("eq13", "eq14", "ex1")
WEIGHT_FAMILIES = ("eq20", "eq21-proofform", "ex2")
ALL_FAMILIES = COMPACT_FAMILIES + QUADRANT_FAMILIES + WEIGHT_FAMILIES
PARAMETRIC = ("eq9", "eq10", "eq11", "eq15", "eq17")

# truncation of the unbounded domains for simulation
QUADRANT_BOX = (math.exp(-3.0), math.exp(3.0))
WEIGHT_BOX = (1.0, 2.0 ** 6)


@dataclass(frozen=True)
class DomainSpec:
    """Where the supremum is taken.

    kind is "unit", "rect", "square12" or "quadrant".  A quadrant domain
    with ``phi`` set means [1, inf)^2 with the weight normaliser; otherwise
    it is the whole quadrant with schedule and normaliser.
    """

    kind: str
    rect: Optional[Rect] = None
    schedule: str = "exp"
    normalizer: str = "loglog"
    phi: Optional[str] = None
    delta: Optional[float] = None

    @property
    def label(self) -> str:
        if self.kind == "rect":
            return f"rect:{self.rect.t1_max:g},{self.rect.t2_max:g}"
        if self.kind == "quadrant":
            if self.phi:
                return f"quadrant:{self.phi}"
            return f"quadrant:{self.schedule}:{self.normalizer}"
        return self.kind

    @property
    def compact(self) -> Optional[Rect]:
        if self.kind == "unit":
            return Rect.unit()
        if self.kind == "square12":
            return Rect.square12()
        if self.kind == "rect":
            return self.rect
        return None

    def growth_schedule(self) -> G.GrowthSchedule:
        return parse_schedule(self.schedule)

    def normalizer_fn(self) -> G.Normalizer:
        if self.normalizer != "loglog":
            raise ValueError(f"unknown normalizer {self.normalizer!r}")
        return G.Normalizer.loglog()

    def weight(self) -> G.WeightFn:
        if self.phi == "phi1":
            return G.WeightFn.phi1(self.delta)
        if self.phi == "phi2":
            return G.WeightFn.phi2(self.delta)
        raise ValueError(f"unknown weight {self.phi!r}")


def parse_schedule(text: str) -> G.GrowthSchedule:
    if text == "exp":
        return G.GrowthSchedule.exponential()
    if text.startswith("geometric:"):
        return G.GrowthSchedule.geometric(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown schedule {text!r}; use exp or geometric:r")


def parse_domain(text: str, *, schedule: str = "exp", normalizer: str = "loglog",
                 phi: Optional[str] = None, delta: Optional[float] = None) -> DomainSpec:
    if text == "unit":
        return DomainSpec("unit")
    if text == "square12":
        return DomainSpec("square12")
    if text.startswith("rect:"):
        parts = text.split(":", 1)[1].split(",")
        if len(parts) != 2:
            raise ValueError("rect domain is rect:T1,T2")
        return DomainSpec("rect", Rect(float(parts[0]), float(parts[1])))
    if text == "quadrant":
        parse_schedule(schedule)
        return DomainSpec("quadrant", schedule=schedule, normalizer=normalizer, phi=phi,
                          delta=delta)
    raise ValueError(f"unknown domain {text!r}")


def default_families(dom: DomainSpec) -> tuple[str, ...]:
    if dom.kind == "unit":
        return ("eq10", "eq12", "eq15", "eq16")
    if dom.kind == "rect":
        r = dom.rect
        fams = ("eq11", "eq12")
        return fams + (("eq15", "eq16") if r.t1_max >= 1 and r.t2_max >= 1 else ())
    if dom.kind == "square12":
        return ("eq17", "eq18")
    if dom.phi:
        fams = ("eq20", "eq21-proofform")
        return fams + (("ex2",) if dom.delta is None else ())
    fams = ("eq13", "eq14")
    if dom.schedule == "exp" and dom.normalizer == "loglog":
        fams += ("ex1",)
    return fams


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class BoundRow:
    family: str
    eps: float
    p: Optional[float]
    result: Optional[B.BoundResult]
    divergent: bool = False
    note: str = ""
    series_terms: Optional[int] = None
    series_tail: Optional[float] = None
    series_converged: Optional[bool] = None

    @property
    def valid(self) -> bool:
        return self.result is not None and self.result.valid and not self.divergent

    @property
    def value(self) -> Optional[float]:
        return self.result.value if self.valid else None

    @property
    def log_value(self) -> Optional[float]:
        return self.result.log_value if self.valid else None

    @property
    def flags(self) -> str:
        f = [] if self.result is None else list(self.result.flags)
        if self.divergent:
            f = [x for x in f if x != "invalid"] + ["divergent"]
        if self.series_converged is False:
            f.append("series-unconverged")
        return ";".join(f)

    @property
    def failed(self) -> str:
        return ";".join(self.result.failed_conditions()) if self.result is not None else ""


def _p_for(p: Optional[float], eps: float) -> float:
    if p is not None:
        return p
    return 1.0 / eps ** 2 if eps > 1 else 0.5


def evaluate_bound(family: str, h: HurstPair, eps: float, dom: DomainSpec, *,
                   p: Optional[float] = None, optimize: bool = False,
                   tol: float = DEFAULT_TOL, kappa: Optional[float] = None) -> BoundRow:
    """One family at one eps on one domain.

    With ``optimize`` the parametric families use the optimised p; otherwise
    p defaults to 1/eps^2 (0.5 when eps <= 1).
    """
    rect = dom.compact
    if family in COMPACT_FAMILIES:
        if rect is None:
            raise ValueError(f"{family} needs a compact domain")
        return _compact(family, h, eps, dom, rect, p, optimize)
    if family in QUADRANT_FAMILIES:
        if dom.kind != "quadrant" or dom.phi:
            raise ValueError(f"{family} is a whole-quadrant bound")
        sched, c = dom.growth_schedule(), dom.normalizer_fn()
        fn = {"eq13": lambda: G.global_bound_thm35(h, sched, c, eps, tol),
              "eq14": lambda: G.global_bound_cor36(h, sched, c, eps, tol),
              "ex1": lambda: G.example1_bound(h, eps, tol)}[family]
        return _series_row(family, eps, fn)
    if family in WEIGHT_FAMILIES:
        if dom.kind != "quadrant" or not dom.phi:
            raise ValueError(f"{family} needs the quadrant domain with --phi")
        phi = dom.weight()
        fn = {"eq20": lambda: G.quadrant_bound_thm47(h, phi, eps, tol),
              "eq21-proofform": lambda: G.quadrant_bound_cor48(h, phi, eps, tol, kappa=kappa),
              "ex2": lambda: G.example2_bounds(h, dom.phi, eps, tol)}[family]
        return _series_row(family, eps, fn)
    raise ValueError(f"unknown family {family!r}")


def _series_row(family, eps, fn) -> BoundRow:
    try:
        res, series = fn()
    except SeriesDivergenceError as exc:
        return BoundRow(family, eps, None, None, divergent=True, note=str(exc))
    if series is None:
        return BoundRow(family, eps, None, res)
    return BoundRow(family, eps, None, res, series_terms=series.terms_used,
                    series_tail=series.relative_tail, series_converged=series.converged)


def _compact(family, h, eps, dom, rect, p, optimize) -> BoundRow:
    scale = rect.scale(h) if rect.at_origin else None
    if family in ("eq10", "eq12") and dom.kind == "rect":
        # raw sup over [0, T1] x [0, T2] at eps is the unit-square event at eps / scale
        family_eps = eps / scale
    else:
        family_eps = eps
    if family == "eq11":
        if not rect.at_origin:
            raise ValueError("eq11 needs an origin rectangle")
        family_eps = eps / scale
    if family in PARAMETRIC:
        if optimize and p is None:
            opt_family = {"eq11": "eq10"}.get(family, family)
            opt_dom = Rect.unit() if opt_family == "eq10" else rect
            rep = optimize_p(opt_family, h, opt_dom, family_eps)
            p_used = rep.best_p
        else:
            p_used = _p_for(p, family_eps)
        if family == "eq11":
            res = B.bound_rect_scaled(h, rect, p_used, family_eps)
        elif family == "eq10" and dom.kind == "rect":
            res = B.bound_unit_square_rho1(h, p_used, family_eps)
        else:
            res = B.evaluate_family(family, h, family_eps, rect=rect, p=p_used)
        res.params["eps_raw"] = eps
        return BoundRow(family, eps, p_used, res)
    if family == "eq12" and dom.kind == "rect":
        res = B.bound_unit_square_eps(h, family_eps)
    else:
        res = B.evaluate_family(family, h, family_eps, rect=rect)
    return BoundRow(family, eps, None, res)


# ---------------------------------------------------------------------------
# certification


def default_grid(dom: DomainSpec, n1: int = 64, n2: int = 64) -> Grid2:
    if dom.kind == "quadrant":
        lo, hi = WEIGHT_BOX if dom.phi else QUADRANT_BOX
        return Grid2.geometric(lo, hi, n1, n2)
    return Grid2.uniform(dom.compact, n1, n2)


def domain_normalizer(dom: DomainSpec, h: HurstPair) -> Optional[Callable]:
    if dom.kind != "quadrant":
        return None
    if dom.phi:
        return weight_normalizer(h, dom.weight())
    return quadrant_normalizer(h, dom.normalizer_fn())


@dataclass
class CertifyRow:
    h: HurstPair
    domain: str
    grid: str
    paths: int
    seed: int
    eps: float
    hits: int
    p_hat: float
    ci99_low: float
    ci99_high: float
    bound: BoundRow

    @property
    def dominated(self) -> Optional[bool]:
        if not self.bound.valid:
            return None
        return self.ci99_high <= self.bound.value


@dataclass
class CampaignConfig:
    hurst: list
    domain: DomainSpec
    eps: list
    families: Optional[list] = None
    paths: int = 100_000
    seed: int = 0
    grid: tuple = (64, 64)
    workers: int = 1
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.hurst:
            raise ValueError("at least one Hurst pair is required")
        if not self.eps or any(b <= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps grid must be non-empty and strictly ascending")
        if not (isinstance(self.paths, int) and self.paths >= 1):
            raise ValueError("paths must be a positive integer")
        fams = self.families or list(default_families(self.domain))
        for f in fams:
            if f not in ALL_FAMILIES:
                raise ValueError(f"unknown family {f!r}")
        self.families = fams


def certify(cfg: CampaignConfig, progress: Optional[Callable[[str], None]] = None
            ) -> list[CertifyRow]:
    """Monte-Carlo tails against every requested bound.

    A row is dominated when the 99% upper confidence limit of the empirical
    tail is at most the bound.
    """
    rows = []
    grid = default_grid(cfg.domain, *cfg.grid)
    gtxt = f"{cfg.grid[0]}x{cfg.grid[1]}"
    for h in cfg.hurst:
        mc = McConfig(cfg.paths, cfg.seed, cfg.workers)
        if progress:
            progress(f"h={h} domain={cfg.domain.label}: simulating {cfg.paths} paths")
        sampler = SheetSampler(h, grid)
        cb = None
        if progress:
            def cb(done, total, _h=h):
                if done == total or done % 64 == 0:
                    progress(f"h={_h}: {done}/{total} chunks")
        maxima = path_maxima(h, grid, mc, domain_normalizer(cfg.domain, h), sampler, cb)
        tails = tail_estimates(maxima, cfg.eps)
        for t in tails:
            for fam in cfg.families:
                b = evaluate_bound(fam, h, t.eps, cfg.domain, optimize=True, tol=cfg.tol)
                rows.append(CertifyRow(h, cfg.domain.label, gtxt, cfg.paths, cfg.seed, t.eps,
                                       t.hits, t.p_hat, t.ci99_low, t.ci99_high, b))
    return rows


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerifyRow:
    check: str
    h: str
    passed: bool
    worst: float
    detail: str = ""


def covering_sweep(hurst: Sequence[HurstPair], *, n_radii: int = 8, grid_res: int = 64,
                   rects: Sequence[Rect] = (Rect(1.0, 1.0), Rect(2.0, 3.0))) -> list[dict]:
    """Closed-form covering bounds against the packing lower bound.

    Radii are log-spaced from the metric size of a 1e-3 step to the diameter.
    """
    out = []
    for h in hurst:
        for rect in rects:
            metric = HolderMetric(h)
            lo = 1e-3 ** h.h_min
            hi = metric(*rect.sides)
            for u in np.geomspace(lo, hi, n_radii):
                pk = packing_oracle(metric, rect, float(u), grid_res)
                fb = covering_bound_rho2(h, rect, float(u))
                out.append(dict(metric="rho2", h=str(h), rect=f"{rect.t1_max:g}x{rect.t2_max:g}",
                                radius=float(u), formula=fb, packing=pk, ok=pk <= fb))
            if rect.t1_max == rect.t2_max:
                C, a = 2.0, h.h_min
                for u in np.geomspace(C * 1e-3 ** a, C * rect.t1_max ** a, n_radii):
                    r = (float(u) / C) ** (1.0 / a)
                    pk = packing_oracle(MaxMetric(), rect, r, grid_res)
                    fb = covering_bound_rho1(rect, C, a, float(u))
                    out.append(dict(metric="rho1", h=str(h), rect=f"{rect.t1_max:g}x{rect.t2_max:g}",
                                    radius=r, formula=fb, packing=pk, ok=pk <= fb))
    return out


def relaxation_checks(hurst: Sequence[HurstPair], tol: float = DEFAULT_TOL) -> list[VerifyRow]:
    rows = []
    sched, c = G.GrowthSchedule.exponential(), G.Normalizer.loglog()
    for h in hurst:
        M = G.schedule_m_constant(h, sched, c).value
        worst, ok = -math.inf, True
        for f in (1.05, 1.5, 2.0, 3.0):
            eps = f * G.cor36_threshold(h, M)
            a = G.global_bound_thm35(h, sched, c, eps, tol)[0]
            b = G.global_bound_cor36(h, sched, c, eps, tol)[0]
            d = a.log_value - b.log_value
            worst = max(worst, d)
            ok &= d <= 1e-12
        rows.append(VerifyRow("cor36 >= thm35", str(h), ok, worst))
        worst, ok = -math.inf, True
        phi = G.WeightFn.phi2()
        for f in (1.05, 1.5, 2.0, 3.0):
            eps = f * G.cor48_threshold(h, 1.0)
            a = G.quadrant_bound_thm47(h, phi, eps, tol)[0]
            b = G.quadrant_bound_cor48(h, phi, eps, tol, kappa=1.0)[0]
            d = a.log_value - b.log_value
            worst = max(worst, d)
            ok &= d <= 1e-12
        rows.append(VerifyRow("cor48 >= thm47", str(h), ok, worst))
        worst, ok = -math.inf, True
        for eps in (2.5, 4.0, 8.0):
            p = 1.0 / eps ** 2
            pairs = [(B.log_bound_unit_square_eps(h, eps), B.log_bound_unit_square_rho1(h, p, eps)),
                     (B.log_bound_rect_rho2_eps(h, Rect.unit(), eps),
                      B.log_bound_rect_rho2(h, Rect.unit(), p, eps)),
                     (B.log_bound_square12_eps(h, eps), B.log_bound_square12_rho2(h, p, eps))]
            for closed, parent in pairs:
                worst = max(worst, parent - closed)
                ok &= closed >= parent - 1e-12 * abs(parent)
        rows.append(VerifyRow("closed forms >= parents at p = 1/eps^2", str(h), ok, worst))
    return rows


def verify(hurst: Sequence[HurstPair], *, paths: int = 20000, seed: int = 0, grid: tuple = (32, 32),
           misprinted_exponent: bool = False, covering: bool = False) -> tuple[list[VerifyRow], list[dict]]:
    rows = []
    g = Grid2.uniform(Rect.unit(), *grid)
    for h in hurst:
        rep = verify_model_identities(h, g, McConfig(paths, seed), misprinted_exponent=misprinted_exponent)
        rows.extend(VerifyRow(c.name, str(h), c.passed, c.worst_error, c.detail) for c in rep.checks)
    rows.extend(relaxation_checks(hurst))
    sweep = covering_sweep(hurst) if covering else []
    if covering:
        bad = [r for r in sweep if not r["ok"]]
        rows.append(VerifyRow("covering formulas >= packing", "all", not bad, float(len(bad)),
                              f"{len(sweep)} radii"))
    return rows, sweep


# ---------------------------------------------------------------------------
# report


def report(hurst: Sequence[HurstPair], dom: DomainSpec, eps: Sequence[float],
           families: Optional[Sequence[str]] = None, tol: float = DEFAULT_TOL) -> list[BoundRow]:
    """Every family on an eps grid with optimised p: a plot-ready comparison table."""
    fams = list(families or default_families(dom))
    out = []
    for h in hurst:
        for e in eps:
            for f in fams:
                row = evaluate_bound(f, h, e, dom, optimize=True, tol=tol)
                row.note = str(h)
                out.append(row)
    return out


__all__ = ["DomainSpec", "parse_domain", "parse_schedule", "evaluate_bound", "BoundRow",
           "CampaignConfig", "CertifyRow", "certify", "verify", "report", "covering_sweep",
           "default_families", "default_grid", "domain_normalizer", "best_bound",
           "SCHEMA_VERSION", "ALL_FAMILIES"]
