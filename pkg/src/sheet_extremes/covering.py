"""Metrics on the parameter rectangle and covering-number bounds.

Two metrics are used: the max metric rho1(t, s) = max_i |t_i - s_i| and the
anisotropic Hoelder metric rho2(t, s) = sum_i |t_i - s_i|^{H_i}.  Closed-form
covering bounds feed the entropy factor of the tail bounds; the greedy
lattice oracles give independent upper (cover) and lower (packing) counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.signal import fftconvolve

from .field_model import HurstPair, Rect, abs_pow

# relative slack for floating-point ball membership
_MEMBERSHIP_RTOL = 1e-12


@dataclass(frozen=True)
class MaxMetric:
    name = "rho1"

    def __call__(self, d1, d2):
        return np.maximum(np.abs(d1), np.abs(d2))

    def half_widths(self, r: float) -> tuple[float, float]:
        return r, r


@dataclass(frozen=True)
class HolderMetric:
    h: HurstPair
    name = "rho2"

    def __call__(self, d1, d2):
        return abs_pow(d1, self.h.h1) + abs_pow(d2, self.h.h2)

    def half_widths(self, r: float) -> tuple[float, float]:
        return r ** (1.0 / self.h.h1), r ** (1.0 / self.h.h2)


Metric = Union[MaxMetric, HolderMetric]


def distance(metric: Metric, t, s) -> float:
    (t1, t2), (s1, s2) = t, s
    out = metric(np.subtract(t1, s1), np.subtract(t2, s2))
    return float(out) if np.ndim(out) == 0 else out


def diameter(metric: Metric, rect: Rect) -> float:
    a, b = rect.sides
    return float(metric(a, b))


@dataclass
class CoveringEstimate:
    radius: float
    formula_bound: float
    oracle_cover_count: Optional[int] = None
    oracle_packing_count: Optional[int] = None
    grid_resolution: Optional[int] = None

    def __post_init__(self):
        if self.formula_bound < 1:
            raise ValueError("a covering bound is at least 1")
        if (
            self.oracle_cover_count is not None
            and self.oracle_packing_count is not None
            and self.oracle_packing_count > self.oracle_cover_count
        ):
            raise ValueError("packing count exceeds cover count")


def covering_bound_rho1(rect: Rect, sigma_c: float, sigma_alpha: float, u: float) -> float:
    """(T C^{1/a} / (2 u^{1/a}) + 1)^2 for sigma(h) = C h^a on the square [0, T]^2.

    This bounds N(sigma^{-1}(u)), the number of rho1-balls of radius
    (u / C)^{1/a} needed to cover the square: ceil(T / 2r) balls per side.
    """
    if not (u > 0 and sigma_c > 0 and 0 < sigma_alpha <= 1):
        raise ValueError("need u > 0, C > 0 and 0 < alpha <= 1")
    if not rect.at_origin or rect.t1_max != rect.t2_max:
        raise ValueError("the rho1 covering formula is stated for squares [0, T]^2 only")
    T = rect.t1_max
    inv = 1.0 / sigma_alpha
    return (T * sigma_c ** inv / (2.0 * u ** inv) + 1.0) ** 2


def covering_bound_rho2(h: HurstPair, rect: Rect, u: float) -> float:
    """2 (T1 / (4 K1 u^{1/H1}) + 3/2)(T2 / (4 K2 u^{1/H2}) + 3/2).

    A rho2-ball of radius u contains the diamond |x1|/a1 + |x2|/a2 <= 1 with
    a_i = 2 K_i u^{1/H_i}, and diamonds tile the rectangle at that count.
    """
    if not u > 0:
        raise ValueError("radius must be positive")
    if not rect.at_origin:
        raise ValueError("the rho2 covering formula is stated for [0, T1] x [0, T2]")
    f1 = rect.t1_max / (4.0 * h.k1 * u ** (1.0 / h.h1)) + 1.5
    f2 = rect.t2_max / (4.0 * h.k2 * u ** (1.0 / h.h2)) + 1.5
    return 2.0 * f1 * f2


def lattice(rect: Rect, grid_res: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred grid_res x grid_res lattice inside rect."""
    if grid_res < 2:
        raise ValueError("grid_res must be at least 2")
    k = (np.arange(grid_res) + 0.5) / grid_res
    a, b = rect.sides
    return rect.t1_min + a * k, rect.t2_min + b * k


def _stencil(metric: Metric, r: float, sp1: float, sp2: float, rtol: float, n: int):
    w1, w2 = metric.half_widths(r * (1 + rtol))
    # offsets beyond the lattice never matter
    a = int(min(math.floor(min(w1 / sp1, n) + 1e-9), n - 1))
    b = int(min(math.floor(min(w2 / sp2, n) + 1e-9), n - 1))
    d1 = np.arange(-a, a + 1)[:, None] * sp1
    d2 = np.arange(-b, b + 1)[None, :] * sp2
    return metric(d1, d2) <= r * (1 + rtol), a, b


def covering_oracle(metric: Metric, rect: Rect, u: float, grid_res: int = 256) -> int:
    """Greedy set cover of the lattice by closed balls of radius u centred at lattice points.

    Each step picks the centre covering the most still-uncovered points, ties
    broken by row-major lattice order.  Coverage counts are maintained
    incrementally with local convolutions.
    """
    if not u > 0:
        raise ValueError("radius must be positive")
    x1, x2 = lattice(rect, grid_res)
    n = grid_res
    sp1, sp2 = x1[1] - x1[0], x2[1] - x2[0]
    ball, a, b = _stencil(metric, u, sp1, sp2, _MEMBERSHIP_RTOL, n)
    kern = ball.astype(float)
    uncovered = np.ones((n, n), dtype=bool)
    counts = np.rint(fftconvolve(uncovered.astype(float), kern, mode="same")).astype(np.int64)
    chosen = 0
    remaining = n * n
    while remaining > 0:
        idx = int(np.argmax(counts))
        i, j = divmod(idx, n)
        if counts[i, j] <= 0:
            break
        i0, i1 = max(i - a, 0), min(i + a + 1, n)
        j0, j1 = max(j - b, 0), min(j + b + 1, n)
        sub = ball[i0 - (i - a): i1 - (i - a), j0 - (j - b): j1 - (j - b)]
        newly = uncovered[i0:i1, j0:j1] & sub
        uncovered[i0:i1, j0:j1] &= ~sub
        remaining -= int(newly.sum())
        chosen += 1
        # every centre whose ball meets a newly covered point loses that point
        dec = np.rint(fftconvolve(newly.astype(float), kern, mode="full")).astype(np.int64)
        r0, c0 = i0 - a, j0 - b
        ra, rb = max(r0, 0), min(r0 + dec.shape[0], n)
        ca, cb = max(c0, 0), min(c0 + dec.shape[1], n)
        counts[ra:rb, ca:cb] -= dec[ra - r0: rb - r0, ca - c0: cb - c0]
    return chosen


def packing_oracle(metric: Metric, rect: Rect, u: float, grid_res: int = 256) -> int:
    """Size of a greedy maximal set of lattice points with pairwise distance > 2u.

    No closed ball of radius u can hold two such points, so the count is a
    lower bound for the covering number of the rectangle itself.
    """
    if not u > 0:
        raise ValueError("radius must be positive")
    x1, x2 = lattice(rect, grid_res)
    n = grid_res
    sp1, sp2 = x1[1] - x1[0], x2[1] - x2[0]
    # conservative: near-ties at exactly 2u count as too close
    blocked_ball, a, b = _stencil(metric, 2.0 * u, sp1, sp2, 1e-9, n)
    blocked = np.zeros((n, n), dtype=bool)
    count = 0
    for i in range(n):
        row = blocked[i]
        j = 0
        while j < n:
            if row[j]:
                free = np.flatnonzero(~row[j:])
                if free.size == 0:
                    break
                j += int(free[0])
            count += 1
            i0, i1 = max(i - a, 0), min(i + a + 1, n)
            j0, j1 = max(j - b, 0), min(j + b + 1, n)
            blocked[i0:i1, j0:j1] |= blocked_ball[i0 - (i - a): i1 - (i - a), j0 - (j - b): j1 - (j - b)]
            j += 1
    return count


def covering_estimate(metric: Metric, rect: Rect, u: float, grid_res: int = 256,
                      *, with_cover: bool = False) -> CoveringEstimate:
    """Closed-form bound at radius u alongside the lattice oracles."""
    if isinstance(metric, HolderMetric):
        formula = covering_bound_rho2(metric.h, rect, u)
    else:
        formula = covering_bound_rho1(rect, 1.0, 1.0, u)
    return CoveringEstimate(
        radius=u,
        formula_bound=formula,
        oracle_cover_count=covering_oracle(metric, rect, u, grid_res) if with_cover else None,
        oracle_packing_count=packing_oracle(metric, rect, u, grid_res),
        grid_resolution=grid_res,
    )
