"""Exact simulation of the sheet on rectangular grids and Monte-Carlo tails.

The covariance on a product grid is the Kronecker product of the two axis
covariance matrices, so with R_i = L_i L_i^T a sample is L1 Z L2^T for an
n1 x n2 matrix Z of independent standard normals.

Each path draws from its own Philox stream keyed by the seed with the path
index in the counter, so the output does not depend on how paths are spread
over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.stats import beta as beta_dist

from .field_model import HurstPair, Rect, abs_pow, fbs_covariance, increment_std_bound, \
    increment_variance_exact, increment_variance_h, increment_variance_v, kernel_1d, \
    rect_increment_variance

MAX_POINTS = 2 ** 22
CHUNK = 256
CI_LEVEL = 0.99
_JITTERS = (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10)


class FactorizationError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# grids and samples


@dataclass(frozen=True)
class Grid2:
    axis1: np.ndarray
    axis2: np.ndarray
    max_points: int = MAX_POINTS

    def __post_init__(self):
        a1 = np.asarray(self.axis1, dtype=float)
        a2 = np.asarray(self.axis2, dtype=float)
        object.__setattr__(self, "axis1", a1)
        object.__setattr__(self, "axis2", a2)
        for a in (a1, a2):
            if a.ndim != 1 or a.size == 0:
                raise ValueError("grid axes must be non-empty 1-D arrays")
            if not np.all(np.isfinite(a)) or a[0] < 0:
                raise ValueError("grid coordinates must be finite and >= 0")
            if not np.all(np.diff(a) > 0):
                raise ValueError("grid axes must be strictly increasing")
        if a1.size * a2.size > self.max_points:
            raise ValueError(f"grid has {a1.size * a2.size} points, limit {self.max_points}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.axis1.size, self.axis2.size

    @classmethod
    def uniform(cls, rect: Rect, n1: int, n2: int) -> "Grid2":
        """n1 x n2 points; on an origin rectangle the zero lines are left out."""
        if rect.at_origin:
            return cls(rect.t1_max * np.arange(1, n1 + 1) / n1,
                       rect.t2_max * np.arange(1, n2 + 1) / n2)
        return cls(np.linspace(rect.t1_min, rect.t1_max, n1),
                   np.linspace(rect.t2_min, rect.t2_max, n2))

    @classmethod
    def geometric(cls, lo: float, hi: float, n1: int, n2: int) -> "Grid2":
        return cls(np.geomspace(lo, hi, n1), np.geomspace(lo, hi, n2))

    def refine(self) -> "Grid2":
        """Dyadic refinement that keeps every current point (midpoints inserted)."""
        def ref(a):
            mids = 0.5 * (a[:-1] + a[1:])
            out = np.empty(2 * a.size - 1)
            out[0::2] = a
            out[1::2] = mids
            return out
        return Grid2(ref(self.axis1), ref(self.axis2), self.max_points)


@dataclass
class FieldSample:
    values: np.ndarray
    grid: Grid2

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError("sample shape does not match grid")


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    seed: int = 0
    workers: int = 1
    chunk: int = CHUNK

    def __post_init__(self):
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            raise ValueError("n_paths must be a positive integer")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.workers < 1 or self.chunk < 1:
            raise ValueError("workers and chunk must be positive")


@dataclass
class TailEstimate:
    eps: float
    hits: int
    n_paths: int
    ci99_low: float
    ci99_high: float

    @property
    def p_hat(self) -> float:
        return self.hits / self.n_paths

    def __post_init__(self):
        if not (0 <= self.ci99_low <= self.p_hat <= self.ci99_high <= 1):
            raise ValueError("inconsistent confidence interval")


def clopper_pearson(hits: int, n: int, level: float = CI_LEVEL) -> tuple[float, float]:
    """Exact two-sided binomial interval."""
    if not (0 <= hits <= n and n >= 1):
        raise ValueError("need 0 <= hits <= n, n >= 1")
    a = 1.0 - level
    lo = 0.0 if hits == 0 else float(beta_dist.ppf(a / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(beta_dist.ppf(1 - a / 2, hits + 1, n - hits))
    return lo, hi


# ---------------------------------------------------------------------------
# factorization and sampling


@dataclass(frozen=True)
class AxisFactor:
    L: np.ndarray
    jitter: float
    nonzero: np.ndarray  # boolean mask of axis points > 0


def axis_covariance(h_axis: float, axis) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    return kernel_1d(h_axis, a[:, None], a[None, :])


def axis_cov_factor(h_axis: float, axis, *, return_info: bool = False):
    """Lower Cholesky factor of the fractional Brownian motion covariance on axis.

    Diagonal jitter, relative to trace/n, is added in steps from 1e-14 to
    1e-10 only if the plain factorization fails.
    """
    a = np.asarray(axis, dtype=float)
    if a.ndim != 1 or a.size == 0 or not np.all(a > 0) or not np.all(np.diff(a) > 0):
        raise ValueError("axis must be strictly increasing and strictly positive")
    if not 0 < h_axis < 1:
        raise ValueError("Hurst exponent must lie in (0, 1)")
    R = axis_covariance(h_axis, a)
    scale = float(np.trace(R)) / a.size
    for j in _JITTERS:
        try:
            L = linalg.cholesky(R + j * scale * np.eye(a.size), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return (L, j) if return_info else L
    cond = np.linalg.cond(R)
    raise FactorizationError(
        f"covariance not positive definite after jitter {_JITTERS[-1]:g} (condition number {cond:.3g})")


def _factor(h_axis: float, axis: np.ndarray) -> AxisFactor:
    nz = axis > 0
    L, j = axis_cov_factor(h_axis, axis[nz], return_info=True)
    return AxisFactor(L, j, nz)


class SheetSampler:
    """Factors for one (h, grid); immutable after construction, shared by threads."""

    def __init__(self, h: HurstPair, grid: Grid2):
        self.h = h
        self.grid = grid
        self.f1 = _factor(h.h1, grid.axis1)
        self.f2 = _factor(h.h2, grid.axis2)

    @property
    def jitter(self) -> tuple[float, float]:
        return self.f1.jitter, self.f2.jitter

    def path_rng(self, seed: int, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(index), 0]))

    def interior(self, start: int, stop: int, seed: int) -> np.ndarray:
        """Samples on the non-zero block for paths start..stop-1, shape (k, m1, m2)."""
        m1, m2 = self.f1.L.shape[0], self.f2.L.shape[0]
        z = np.empty((stop - start, m1, m2))
        for i, idx in enumerate(range(start, stop)):
            # row-major fill of Z, part of the reproducibility contract
            z[i] = self.path_rng(seed, idx).standard_normal((m1, m2))
        return np.matmul(np.matmul(self.f1.L, z), self.f2.L.T)

    def embed(self, block: np.ndarray) -> np.ndarray:
        n1, n2 = self.grid.shape
        out = np.zeros(block.shape[:-2] + (n1, n2))
        r = np.flatnonzero(self.f1.nonzero)
        c = np.flatnonzero(self.f2.nonzero)
        out[..., r[:, None], c[None, :]] = block
        return out

    def covariance_factor(self) -> np.ndarray:
        """L1 kron L2 on the non-zero block; only for small test grids."""
        return np.kron(self.f1.L, self.f2.L)


def sample_fbs(h: HurstPair, grid: Grid2, cfg: McConfig,
               sampler: Optional[SheetSampler] = None) -> Iterator[FieldSample]:
    s = sampler or SheetSampler(h, grid)
    for start in range(0, cfg.n_paths, cfg.chunk):
        stop = min(start + cfg.chunk, cfg.n_paths)
        full = s.embed(s.interior(start, stop, cfg.seed))
        for k in range(full.shape[0]):
            yield FieldSample(full[k], grid)


def _chunks(cfg: McConfig):
    return [(a, min(a + cfg.chunk, cfg.n_paths)) for a in range(0, cfg.n_paths, cfg.chunk)]


def path_maxima(h: HurstPair, grid: Grid2, cfg: McConfig,
                normalizer: Optional[Callable] = None,
                sampler: Optional[SheetSampler] = None,
                progress: Optional[Callable[[int, int], None]] = None) -> np.ndarray:
    """Per-path max over the grid of |X| / normalizer, in path order.

    Points on the axes carry X = 0 and are skipped (the normalizer may vanish
    there).
    """
    s = sampler or SheetSampler(h, grid)
    a1 = grid.axis1[s.f1.nonzero]
    a2 = grid.axis2[s.f2.nonzero]
    if normalizer is None:
        inv = None
    else:
        T1, T2 = np.meshgrid(a1, a2, indexing="ij")
        nv = np.asarray(normalizer(T1, T2), dtype=float)
        if nv.shape != T1.shape or not np.all(np.isfinite(nv)) or not np.all(nv > 0):
            raise ValueError("normalizer must be finite and strictly positive on the grid")
        inv = 1.0 / nv

    def work(bounds):
        x = np.abs(s.interior(bounds[0], bounds[1], cfg.seed))
        if inv is not None:
            x *= inv
        return x.reshape(x.shape[0], -1).max(axis=1)

    chunks = _chunks(cfg)
    out = np.empty(cfg.n_paths)
    if cfg.workers == 1:
        results = map(work, chunks)
    else:
        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        results = pool.map(work, chunks)
    try:
        for done, ((a, b), m) in enumerate(zip(chunks, results), 1):
            out[a:b] = m
            if progress is not None:
                progress(done, len(chunks))
    finally:
        if cfg.workers != 1:
            pool.shutdown()
    return out


def tail_estimates(maxima: np.ndarray, eps_list: Sequence[float]) -> list[TailEstimate]:
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size == 0 or np.any(np.diff(eps) < 0):
        raise ValueError("eps_list must be non-empty and ascending")
    n = int(maxima.size)
    out = []
    for e in eps:
        k = int(np.count_nonzero(maxima > e))
        lo, hi = clopper_pearson(k, n)
        out.append(TailEstimate(float(e), k, n, lo, hi))
    return out


def empirical_sup_tail(h: HurstPair, grid: Grid2, normalizer: Optional[Callable],
                       eps_list: Sequence[float], cfg: McConfig, **kw) -> list[TailEstimate]:
    """P{max over grid of |X| / normalizer > eps} with Clopper-Pearson 99% intervals.

    The grid max is below the continuum sup, so the estimate is biased low,
    which is the safe side when checking upper bounds.
    """
    eps = list(eps_list)
    if not eps or any(b < a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be non-empty and ascending")
    return tail_estimates(path_maxima(h, grid, cfg, normalizer, **kw), eps)


def quadrant_normalizer(h: HurstPair, c: Callable) -> Callable:
    """(t1 v t2)^{H1+H2} c(t1 v t2)."""
    def f(t1, t2):
        m = np.maximum(t1, t2)
        return m ** h.h_sum * c(m)
    return f


def weight_normalizer(h: HurstPair, phi: Callable) -> Callable:
    """t1^H1 t2^H2 phi(t1, t2)."""
    def f(t1, t2):
        return t1 ** h.h1 * t2 ** h.h2 * phi(t1, t2)
    return f


# ---------------------------------------------------------------------------
# identity report


@dataclass
class IdentityCheck:
    name: str
    passed: bool
    worst_error: float
    detail: str = ""


@dataclass
class IdentityReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, worst, detail=""):
        self.checks.append(IdentityCheck(name, bool(passed), float(worst), detail))


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def verify_model_identities(h: HurstPair, grid: Grid2, cfg: McConfig, *,
                            misprinted_exponent: bool = False, rtol: float = 1e-10,
                            n_random: int = 2000) -> IdentityReport:
    """Analytic identities from the covariance, then sample moments against them."""
    rep = IdentityReport()
    rng = np.random.default_rng(int(cfg.seed))
    hi1, hi2 = float(grid.axis1[-1]), float(grid.axis2[-1])
    t = (rng.uniform(0, hi1, n_random), rng.uniform(0, hi2, n_random))
    s = (rng.uniform(0, hi1, n_random), rng.uniform(0, hi2, n_random))

    direct = increment_variance_exact(h, t, (s[0], t[1]))
    err = _rel(direct, increment_variance_h(h, t, s[0]))
    rep.add("increment variance, first coordinate", np.all(err <= rtol), err.max())
    direct = increment_variance_exact(h, (s[0], t[1]), s)
    formula = increment_variance_v(h, s, t[1], misprinted_exponent=misprinted_exponent)
    err = _rel(direct, formula)
    # values near zero have no relative meaning; compare absolutely there
    bad = (err > rtol) & (np.abs(direct - formula) > 1e-13)
    rep.add("increment variance, second coordinate", not bad.any(), float(np.max(np.abs(direct - formula))),
            "paper exponent" if misprinted_exponent else "")

    # Minkowski on all pairs of a coarse subgrid
    i1 = np.unique(np.linspace(0, grid.shape[0] - 1, min(16, grid.shape[0])).astype(int))
    i2 = np.unique(np.linspace(0, grid.shape[1] - 1, min(16, grid.shape[1])).astype(int))
    P1, P2 = np.meshgrid(grid.axis1[i1], grid.axis2[i2], indexing="ij")
    p1, p2 = P1.ravel(), P2.ravel()
    a1, b1 = np.meshgrid(p1, p1, indexing="ij")
    a2, b2 = np.meshgrid(p2, p2, indexing="ij")
    var = np.maximum(increment_variance_exact(h, (a1, a2), (b1, b2)), 0.0)
    gap = np.sqrt(var) - increment_std_bound(h, (a1, a2), (b1, b2))
    rep.add("Minkowski increment bound", np.all(gap <= 1e-12), max(float(gap.max()), 0.0),
            f"{gap.size} pairs")

    a = (rng.uniform(0.1, 5, n_random), rng.uniform(0.1, 5, n_random))
    lhs = fbs_covariance(h, (a[0] * t[0], a[1] * t[1]), (a[0] * s[0], a[1] * s[1]))
    rhs = a[0] ** (2 * h.h1) * a[1] ** (2 * h.h2) * fbs_covariance(h, t, s)
    err = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-12)
    rep.add("self-similarity", np.all(err <= rtol), err.max())

    u = (rng.uniform(0, hi1, n_random), rng.uniform(0, hi2, n_random))
    d = (rng.uniform(0.01, hi1, n_random), rng.uniform(0.01, hi2, n_random))
    lhs = rect_increment_variance(h, u, (u[0] + d[0], u[1] + d[1]))
    rhs = abs_pow(d[0], 2 * h.h1) * abs_pow(d[1], 2 * h.h2)
    err = _rel(lhs, rhs)
    rep.add("stationary rectangular increments", np.all(err <= rtol), err.max())

    sym = _rel(fbs_covariance(h, t, s), fbs_covariance(h, s, t))
    rep.add("covariance symmetry", np.all(sym <= 1e-15), sym.max())

    # empirical: variances and one covariance against the formula
    sampler = SheetSampler(h, grid)
    n = min(cfg.n_paths, 20000)
    vals = np.concatenate([sampler.embed(sampler.interior(a0, b0, cfg.seed))
                           for a0, b0 in _chunks(McConfig(n, cfg.seed, 1, cfg.chunk))])
    n1, n2 = grid.shape
    probes = [(n1 - 1, n2 - 1), (n1 // 2, n2 // 3), (n1 // 3, n2 - 1)]
    worst = 0.0
    ok = True
    for (i, j) in probes:
        for (k, l) in probes:
            x, y = vals[:, i, j], vals[:, k, l]
            prod = x * y
            se = prod.std(ddof=1) / math.sqrt(n)
            target = fbs_covariance(h, (grid.axis1[i], grid.axis2[j]), (grid.axis1[k], grid.axis2[l]))
            z = abs(prod.mean() - target) / se if se > 0 else 0.0
            worst = max(worst, z)
            ok &= z <= 4.0
    rep.add("sample covariances within 4 standard errors", ok, worst, f"{n} paths")
    return rep
