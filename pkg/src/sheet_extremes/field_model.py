"""Covariance structure of the normalized fractional Brownian sheet.

The field X on the quadrant [0, inf)^2 has covariance

    E X(t) X(s) = 1/4 * prod_i (t_i^{2 H_i} + s_i^{2 H_i} - |t_i - s_i|^{2 H_i}),

so E X(1, 1)^2 = 1, the field vanishes on both axes, it is self-similar with
index (H1, H2) and it has stationary rectangular increments.  Everything in
this module is exact arithmetic on that kernel; the sampler and the analytic
bounds build on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def as_real(x) -> np.ndarray:
    """Float array; extended-precision input keeps its precision."""
    arr = np.asarray(x)
    return arr if arr.dtype == np.longdouble else arr.astype(float)


def abs_pow(x, a):
    """|x|**a with a hard zero at x == 0 (no 0**0 or log(0) paths)."""
    x = np.abs(as_real(x))
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, np.exp(a * np.log(np.where(x > 0, x, 1.0))), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HurstPair:
    """Self-similarity index (H1, H2) with the derived constants used by the bounds."""

    h1: float
    h2: float

    def __post_init__(self):
        for name, v in (("h1", self.h1), ("h2", self.h2)):
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "HurstPair":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 2:
            raise ValueError(f"expected 'H1,H2', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))

    def __iter__(self):
        return iter((self.h1, self.h2))

    def __str__(self):
        return f"{self.h1:g},{self.h2:g}"

    def swapped(self) -> "HurstPair":
        return HurstPair(self.h2, self.h1)

    @property
    def h_min(self) -> float:
        return min(self.h1, self.h2)

    @property
    def h_max(self) -> float:
        return max(self.h1, self.h2)

    @property
    def h_sum(self) -> float:
        return self.h1 + self.h2

    @property
    def q(self) -> float:
        return 1.0 / self.h1 + 1.0 / self.h2

    @cached_property
    def k1(self) -> float:
        return (self.h2 / self.h_sum) ** (1.0 / self.h1)

    @cached_property
    def k2(self) -> float:
        return (self.h1 / self.h_sum) ** (1.0 / self.h2)

    @cached_property
    def n1(self) -> float:
        return (self.h_sum / self.h2) ** (1.0 / self.h1) + 3.0

    @cached_property
    def n2(self) -> float:
        return (self.h_sum / self.h1) ** (1.0 / self.h2) + 3.0

    def t_eta(self, t1: float, t2: float) -> float:
        """max(T1^H1, T2^H2), the Lipschitz constant of the increment std on [0,T1]x[0,T2]."""
        return max(t1 ** self.h1, t2 ** self.h2)


@dataclass(frozen=True)
class Point2:
    t1: float
    t2: float

    def __post_init__(self):
        for v in (self.t1, self.t2):
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"point coordinates must be finite and >= 0, got {v!r}")

    def __iter__(self):
        return iter((self.t1, self.t2))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [t1_min, t1_max] x [t2_min, t2_max] in the quadrant."""

    t1_max: float
    t2_max: float
    t1_min: float = 0.0
    t2_min: float = 0.0

    def __post_init__(self):
        vals = (self.t1_min, self.t1_max, self.t2_min, self.t2_max)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"rectangle bounds must be finite and >= 0: {vals}")
        if not (self.t1_min < self.t1_max and self.t2_min < self.t2_max):
            raise ValueError(f"degenerate rectangle: {vals}")

    @classmethod
    def unit(cls) -> "Rect":
        return cls(1.0, 1.0)

    @classmethod
    def square12(cls) -> "Rect":
        return cls(2.0, 2.0, 1.0, 1.0)

    @property
    def at_origin(self) -> bool:
        return self.t1_min == 0.0 and self.t2_min == 0.0

    @property
    def is_unit(self) -> bool:
        return self.at_origin and self.t1_max == 1.0 and self.t2_max == 1.0

    @property
    def is_square12(self) -> bool:
        return (self.t1_min, self.t1_max, self.t2_min, self.t2_max) == (1.0, 2.0, 1.0, 2.0)

    @property
    def sides(self) -> tuple[float, float]:
        return self.t1_max - self.t1_min, self.t2_max - self.t2_min

    def scale(self, h: HurstPair) -> float:
        """T1^H1 * T2^H2 for a rectangle anchored at the origin."""
        return self.t1_max ** h.h1 * self.t2_max ** h.h2


def _coords(p):
    a, b = p
    return as_real(a), as_real(b)


def kernel_1d(hi: float, t, s):
    """1/2 (t^{2H} + s^{2H} - |t - s|^{2H}): the fractional Brownian motion kernel."""
    t = as_real(t)
    s = as_real(s)
    out = 0.5 * (abs_pow(t, 2 * hi) + abs_pow(s, 2 * hi) - abs_pow(t - s, 2 * hi))
    return out


def fbs_covariance(h: HurstPair, t, s):
    """E X(t) X(s).  Accepts points or pairs of equally shaped arrays."""
    t1, t2 = _coords(t)
    s1, s2 = _coords(s)
    out = kernel_1d(h.h1, t1, s1) * kernel_1d(h.h2, t2, s2)
    return float(out) if np.ndim(out) == 0 else out


def increment_variance_exact(h: HurstPair, t, s):
    """E (X(t) - X(s))^2 expanded from the covariance."""
    return fbs_covariance(h, t, t) - 2.0 * fbs_covariance(h, t, s) + fbs_covariance(h, s, s)


def increment_variance_h(h: HurstPair, t, s1):
    """E (X(t) - X(s1, t2))^2 = |t1 - s1|^{2 H1} t2^{2 H2}."""
    t1, t2 = _coords(t)
    out = abs_pow(t1 - as_real(s1), 2 * h.h1) * abs_pow(t2, 2 * h.h2)
    return float(out) if np.ndim(out) == 0 else out


def increment_variance_v(h: HurstPair, s, t2, *, misprinted_exponent: bool = False):
    """E (X(s1, t2) - X(s))^2 = |t2 - s2|^{2 H2} s1^{2 H1}.

    ``misprinted_exponent=True`` raises s1 to 2*H2 instead.  That variant is
    wrong whenever H1 != H2 and exists only so the identity checks can show
    they catch it.
    """
    s1, s2 = _coords(s)
    e1 = 2 * h.h2 if misprinted_exponent else 2 * h.h1
    out = abs_pow(as_real(t2) - s2, 2 * h.h2) * abs_pow(s1, e1)
    return float(out) if np.ndim(out) == 0 else out


def increment_std_bound(h: HurstPair, t, s):
    """Minkowski bound |t1-s1|^H1 t2^H2 + |t2-s2|^H2 s1^H1 on the increment std."""
    t1, t2 = _coords(t)
    s1, s2 = _coords(s)
    out = abs_pow(t1 - s1, h.h1) * abs_pow(t2, h.h2) + abs_pow(t2 - s2, h.h2) * abs_pow(s1, h.h1)
    return float(out) if np.ndim(out) == 0 else out


def rect_increment_variance(h: HurstPair, u, v):
    """E (Delta_u X(v))^2 by expanding the four-point combination over the covariance.

    The rectangular increment is X(v1,v2) - X(u1,v2) - X(v1,u2) + X(u1,u2);
    its second moment is a signed sum of 16 covariances.
    """
    u1, u2 = _coords(u)
    v1, v2 = _coords(v)
    corners = [((v1, v2), 1.0), ((u1, v2), -1.0), ((v1, u2), -1.0), ((u1, u2), 1.0)]
    total = 0.0
    for p, a in corners:
        for q, b in corners:
            total = total + a * b * fbs_covariance(h, p, q)
    return total


def rect_increment(values, u, v) -> float:
    """Delta_u X(v) read off a sampled grid; u and v are (i, j) index pairs."""
    arr = np.asarray(getattr(values, "values", values))
    (i0, j0), (i1, j1) = u, v
    n1, n2 = arr.shape
    for i in (i0, i1):
        if not 0 <= i < n1:
            raise IndexError(f"row index {i} out of range for {n1} rows")
    for j in (j0, j1):
        if not 0 <= j < n2:
            raise IndexError(f"column index {j} out of range for {n2} columns")
    if not (i0 < i1 and j0 < j1):
        raise ValueError("u must lie strictly below v in both grid coordinates")
    return float(arr[i1, j1] - arr[i0, j1] - arr[i1, j0] + arr[i0, j0])
