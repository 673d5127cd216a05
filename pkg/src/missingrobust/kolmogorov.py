"""Kolmogorov geometry on the extended real line.

Distances between laws that put mass on R plus a missingness atom, and the
distance from an empirical law to the set of realisable contaminations of a
fixed continuous base.  The set distance reduces to a small feasibility
system over the target CDF values at the observed points: increments between
consecutive points are sandwiched by lo_mass/hi_mass times the base
increment, while the Kolmogorov band couples each CDF value to the empirical
staircase.  Feasibility for a given band width is decided in closed form by
forward interval propagation, and the symmetrized variant is minimized
exactly as a max of affine functions of the target's total real mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, SizeError
from .extended import as_univariate

__all__ = [
    "EmpiricalSummary",
    "RealisableSetSpec",
    "ChainBounds",
    "EmpiricalDist",
    "DiscreteDist",
    "AnalyticDist",
    "kolmogorov_distance",
    "sym_kolmogorov_distance",
    "dist_to_realisable",
    "dist_to_realisable_batch",
    "dist_to_realisable_bruteforce",
    "dist_to_realisable_sym",
    "separation_profile",
]


@dataclass(frozen=True)
class EmpiricalSummary:
    """Sorted observed values plus the total row count (missing included)."""

    sorted_observed: np.ndarray
    n_total: int

    def __post_init__(self):
        z = np.asarray(self.sorted_observed, dtype=float).reshape(-1)
        if np.any(np.diff(z) < 0):
            z = np.sort(z)
        if not np.all(np.isfinite(z)):
            raise DomainError("observed values must be finite")
        if self.n_total < 1:
            raise SizeError(f"need at least one row, got {self.n_total}")
        if len(z) > self.n_total:
            raise SizeError("more observed values than rows")
        z.setflags(write=False)
        object.__setattr__(self, "sorted_observed", z)

    @staticmethod
    def from_sample(sample) -> "EmpiricalSummary":
        vals, obs = as_univariate(sample)
        return EmpiricalSummary(np.sort(vals[obs]), len(vals))

    @property
    def m(self) -> int:
        return len(self.sorted_observed)

    @property
    def star_share(self) -> float:
        return 1.0 - self.m / self.n_total


@dataclass(frozen=True)
class RealisableSetSpec:
    """All realisable contaminations of ``base`` at level (epsilon, q).

    Observed-value densities in the set are sandwiched between lo_mass and
    hi_mass times the base density.  The base must be continuous.
    """

    base: object
    epsilon: float
    q: float

    def __post_init__(self):
        if not getattr(self.base, "is_continuous", False):
            raise DomainError("realisable set geometry requires a continuous base")
        if getattr(self.base, "dim", 1) != 1:
            raise DomainError("realisable set geometry is univariate")
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")

    @property
    def lo_mass(self) -> float:
        return self.q * (1.0 - self.epsilon)

    @property
    def hi_mass(self) -> float:
        return self.q * (1.0 - self.epsilon) + self.epsilon


@dataclass(frozen=True)
class ChainBounds:
    """Increment bounds for the target CDF across the observed points.

    Entry j bounds V_{j+1} - V_j, the target mass on the interval between
    consecutive observed values (with -inf / +inf sentinels at the ends).
    """

    lower: np.ndarray
    upper: np.ndarray

    @staticmethod
    def from_data(summary: EmpiricalSummary, spec: RealisableSetSpec) -> "ChainBounds":
        F = np.asarray(spec.base.cdf(summary.sorted_observed), dtype=float)
        gaps = np.maximum(np.diff(np.concatenate([[0.0], F, [1.0]])), 0.0)
        lo = spec.lo_mass * gaps
        hi = spec.hi_mass * gaps
        lo.setflags(write=False)
        hi.setflags(write=False)
        return ChainBounds(lo, hi)

    @property
    def prefix_lower(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lower)])

    @property
    def prefix_upper(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.upper)])


def _envelopes(a: np.ndarray, b: np.ndarray, SL: np.ndarray, SU: np.ndarray):
    """Forward reachable interval [l_j, h_j] for each chain node.

    a, b are per-node window bounds with the pinned node a_0 = b_0 = 0 in
    front; SL, SU the prefix sums of the increment bounds.  The recursion
    l_j = max(a_j, l_{j-1} + L_{j-1}) telescopes to a running max of a - SL.
    """
    l = SL + np.maximum.accumulate(a - SL)
    h = SU + np.minimum.accumulate(b - SU)
    return l, h


def _plain_feasible(t: float, m: int, n: int, SL: np.ndarray, SU: np.ndarray) -> bool:
    j = np.arange(1, m + 2)
    emp_hi = np.minimum(j, m) / n  # node m+1 carries the real-mass window
    emp_lo = (j - 1) / n
    a = np.concatenate([[0.0], np.maximum(emp_hi - t, 0.0)])
    b = np.concatenate([[0.0], np.minimum(emp_lo + t, 1.0)])
    l, h = _envelopes(a, b, SL, SU)
    return bool(np.all(l <= h + 1e-15))


def dist_to_realisable(summary, spec: RealisableSetSpec, tol: float = 1e-9) -> float:
    """Kolmogorov distance from an empirical law to the realisable set.

    Bisects the band width; each feasibility check runs in O(m) after one
    pass of base CDF evaluations.  The result overshoots the infimum by at
    most ``tol``.
    """
    if not isinstance(summary, EmpiricalSummary):
        summary = EmpiricalSummary.from_sample(summary)
    m, n = summary.m, summary.n_total
    bounds = ChainBounds.from_data(summary, spec)
    if m == 0:
        return spec.lo_mass
    SL, SU = bounds.prefix_lower, bounds.prefix_upper
    lo_t, hi_t = 0.0, 1.0
    while hi_t - lo_t > 0.5 * tol:
        mid = 0.5 * (lo_t + hi_t)
        if _plain_feasible(mid, m, n, SL, SU):
            hi_t = mid
        else:
            lo_t = mid
    # feasibility is monotone in t, so the upper end must remain feasible
    assert _plain_feasible(hi_t, m, n, SL, SU)
    return hi_t


def dist_to_realisable_batch(
    F_matrix: np.ndarray, n_total: int, lo_mass: float, hi_mass: float, tol: float = 1e-4
) -> np.ndarray:
    """Plain set distance for many candidate bases sharing one data set.

    Row k of ``F_matrix`` holds the k-th candidate base CDF evaluated at the
    sorted observed values; the bisection over the band width runs for all
    rows simultaneously.  Used by grid scans where per-candidate calls would
    dominate the runtime.
    """
    F = np.atleast_2d(np.asarray(F_matrix, dtype=float))
    K, m = F.shape
    n = int(n_total)
    if m == 0:
        return np.full(K, lo_mass)
    gaps = np.maximum(np.diff(np.concatenate([np.zeros((K, 1)), F, np.ones((K, 1))], axis=1)), 0.0)
    zero = np.zeros((K, 1))
    SL = np.concatenate([zero, np.cumsum(lo_mass * gaps, axis=1)], axis=1)
    SU = np.concatenate([zero, np.cumsum(hi_mass * gaps, axis=1)], axis=1)
    j = np.arange(1, m + 2)
    emp_hi = np.minimum(j, m) / n
    emp_lo = (j - 1) / n
    lo_t = np.zeros(K)
    hi_t = np.ones(K)
    while float(np.max(hi_t - lo_t)) > 0.5 * tol:
        t = 0.5 * (lo_t + hi_t)
        a = np.concatenate([zero, np.maximum(emp_hi[None, :] - t[:, None], 0.0)], axis=1)
        b = np.concatenate([zero, np.minimum(emp_lo[None, :] + t[:, None], 1.0)], axis=1)
        l = SL + np.maximum.accumulate(a - SL, axis=1)
        h = SU + np.minimum.accumulate(b - SU, axis=1)
        feas = np.all(l <= h + 1e-15, axis=1)
        hi_t = np.where(feas, t, hi_t)
        lo_t = np.where(feas, lo_t, t)
    return hi_t


def dist_to_realisable_bruteforce(summary, spec: RealisableSetSpec, sym: bool = False) -> float:
    """Small-instance reference solver via an explicit linear program."""
    from scipy.optimize import linprog

    if not isinstance(summary, EmpiricalSummary):
        summary = EmpiricalSummary.from_sample(summary)
    m, n = summary.m, summary.n_total
    if m > 8:
        raise SizeError(f"brute force capped at 8 observed values, got {m}")
    bounds = ChainBounds.from_data(summary, spec)

    nv = m + 1
    rows, rhs = [], []

    def add(coeffs, const: float):
        # node indices may repeat within one constraint, so accumulate pairs
        row = np.zeros(nv + 1)
        for jj, cj in coeffs:
            if jj >= 1:
                row[jj - 1] += cj
        row[nv] = -1.0
        rows.append(row)
        rhs.append(-const)

    for i in range(m + 1):
        add([(i, -1.0)], i / n)
        add([(i, +1.0)], -i / n)
        add([(i + 1, -1.0)], i / n)
        add([(i + 1, +1.0)], -i / n)
        if sym:
            add([(m + 1, -1.0), (i, +1.0)], (m - i) / n)
            add([(m + 1, +1.0), (i, -1.0)], -(m - i) / n)
            add([(m + 1, -1.0), (i + 1, +1.0)], (m - i) / n)
            add([(m + 1, +1.0), (i + 1, -1.0)], -(m - i) / n)
    for j in range(m + 1):
        row = np.zeros(nv + 1)
        row[j] = 1.0
        if j >= 1:
            row[j - 1] = -1.0
        rows.append(row)
        rhs.append(bounds.upper[j])
        rows.append(-row)
        rhs.append(-bounds.lower[j])

    c = np.zeros(nv + 1)
    c[nv] = 1.0
    res = linprog(
        c,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=[(0.0, 1.0)] * nv + [(0.0, None)],
        method="highs",
    )
    if not res.success:
        raise DomainError(f"reference LP failed: {res.message}")
    return float(res.fun)


def dist_to_realisable_sym(summary, spec: RealisableSetSpec) -> float:
    """Symmetrized set distance, solved exactly.

    Adds the upper-half-line comparisons to the band constraints.  For a
    fixed total real mass c of the target, the minimal feasible band width
    t*(c) is a maximum of affine functions of c (slopes -1, -1/2, 0, 1/2, 1):
    window/chain crossings contribute the halved terms, crossings with the
    pinned start node the full-slope ones, and the landing constraints at c
    close the list.  Minimizing over c at piece intersections is exact up to
    float rounding.
    """
    if not isinstance(summary, EmpiricalSummary):
        summary = EmpiricalSummary.from_sample(summary)
    m, n = summary.m, summary.n_total
    bounds = ChainBounds.from_data(summary, spec)
    SL, SU = bounds.prefix_lower, bounds.prefix_upper
    c_lo, c_hi = SL[m + 1], min(1.0, SU[m + 1])

    # pieces as (intercept, slope): t >= intercept + slope * c
    pieces = [(m / n, -1.0), (-m / n, 1.0)]

    if m >= 1:
        k = np.arange(1, m + 1)
        p1 = k / n - SL[1 : m + 1]
        p2 = -(m - k) / n - SL[1 : m + 1]
        q1 = (k - 1) / n - SU[1 : m + 1]
        q2 = -(m - k + 1) / n - SU[1 : m + 1]
        D = SL[1 : m + 1] - SU[1 : m + 1]
        G1 = np.maximum.accumulate(p1)
        G2 = np.maximum.accumulate(p2)
        H1 = np.minimum.accumulate(q1)
        H2 = np.minimum.accumulate(q2)

        # window-vs-window crossings, both band widths in play
        pieces += [
            (0.5 * float(np.max(G1 - H1 + D)), 0.0),
            (0.5 * float(np.max(G1 - H2 + D)), -0.5),
            (0.5 * float(np.max(G2 - H1 + D)), 0.5),
            (0.5 * float(np.max(G2 - H2 + D)), 0.0),
        ]
        # window-vs-start crossings, single band width
        pieces += [
            (float(np.max(p1 + D)), 0.0),
            (float(np.max(p2 + D)), 1.0),
            (float(np.max(-q1 + D)), 0.0),
            (float(np.max(-q2 + D)), -1.0),
        ]
        # landing: the forward envelope must straddle c at the last node
        pieces += [
            (float(G1[-1]) + SL[m + 1], -1.0),
            (float(G2[-1]) + SL[m + 1], 0.0),
            (-SU[m + 1] - float(H1[-1]), 1.0),
            (-SU[m + 1] - float(H2[-1]), 0.0),
        ]

    intercepts = np.array([p[0] for p in pieces])
    slopes = np.array([p[1] for p in pieces])

    cands = [c_lo, c_hi]
    for i in range(len(pieces)):
        ds = slopes[i] - slopes
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (intercepts - intercepts[i]) / ds
        cands.extend(x[np.isfinite(x)])
    cands = np.clip(np.asarray(cands), c_lo, c_hi)
    vals = np.max(intercepts[None, :] + np.outer(cands, slopes), axis=1)
    return float(np.min(np.maximum(vals, 0.0)))


# ---------------------------------------------------------------------------
# pairwise distances between extended-line laws


@dataclass(frozen=True)
class DiscreteDist:
    """Finitely supported law on R plus a missingness atom."""

    points: np.ndarray
    masses: np.ndarray
    star_mass: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        ms = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(pts) != len(ms) or np.any(ms < -1e-15):
            raise DomainError("need one nonnegative mass per point")
        order = np.argsort(pts)
        pts, ms = pts[order], np.maximum(ms[order], 0.0)
        if abs(ms.sum() + self.star_mass - 1.0) > 1e-9:
            raise DomainError("masses must sum to 1")
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        object.__setattr__(self, "_cum", np.cumsum(ms))

    @property
    def real_mass(self) -> float:
        return 1.0 - self.star_mass

    @property
    def jumps(self) -> np.ndarray:
        return self.points

    def cdf(self, t):
        if len(self.points) == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        ix = np.searchsorted(self.points, np.asarray(t, dtype=float), side="right")
        return np.where(ix > 0, self._cum[np.maximum(ix - 1, 0)], 0.0)

    def cdf_left(self, t):
        if len(self.points) == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        ix = np.searchsorted(self.points, np.asarray(t, dtype=float), side="left")
        return np.where(ix > 0, self._cum[np.maximum(ix - 1, 0)], 0.0)


def EmpiricalDist(sample) -> DiscreteDist:
    """The empirical law of a univariate extended-line sample."""
    vals, obs = as_univariate(sample)
    n = len(vals)
    if n == 0:
        raise SizeError("empty sample")
    pts, counts = np.unique(vals[obs], return_counts=True)
    return DiscreteDist(pts, counts / n, star_mass=1.0 - counts.sum() / n)


@dataclass(frozen=True)
class AnalyticDist:
    """Law given by a callable sub-CDF over R plus a missingness atom.

    ``cdf_fn`` must already integrate to 1 - star_mass at +inf; jumps lists
    its discontinuity points (empty for continuous laws).
    """

    cdf_fn: object
    star_mass: float = 0.0
    jump_points: tuple = ()

    @property
    def real_mass(self) -> float:
        return 1.0 - self.star_mass

    @property
    def jumps(self) -> np.ndarray:
        return np.asarray(self.jump_points, dtype=float)

    def cdf(self, t):
        return np.asarray(self.cdf_fn(np.asarray(t, dtype=float)), dtype=float)

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.jump_points) == 0:
            return self.cdf(t)
        return self.cdf(np.nextafter(t, -np.inf))


def _candidates(d1, d2) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(d1.jumps), np.asarray(d2.jumps)]))


def kolmogorov_distance(d1, d2) -> float:
    """sup over lower half-lines of the mass difference, star atom included.

    Exact whenever at least one argument is piecewise constant between its
    jumps (empirical or discrete), which pins the sup to the jump set.
    """
    best = abs(d1.star_mass - d2.star_mass)
    ts = _candidates(d1, d2)
    if len(ts):
        best = max(best, float(np.max(np.abs(d1.cdf(ts) - d2.cdf(ts)))))
        best = max(best, float(np.max(np.abs(d1.cdf_left(ts) - d2.cdf_left(ts)))))
    return best


def sym_kolmogorov_distance(d1, d2) -> float:
    """Half-line sup in both directions plus the star atom."""
    best = kolmogorov_distance(d1, d2)
    ts = _candidates(d1, d2)
    if len(ts):
        u1, u2 = d1.real_mass - d1.cdf_left(ts), d2.real_mass - d2.cdf_left(ts)
        best = max(best, float(np.max(np.abs(u1 - u2))))
        v1, v2 = d1.real_mass - d1.cdf(ts), d2.real_mass - d2.cdf(ts)
        best = max(best, float(np.max(np.abs(v1 - v2))))
    return best


def separation_profile(a: float, b: float | None, sigma: float, epsilon: float, q: float) -> float:
    """Distance lower-bound profile between contamination sets at mean gap 2a.

    Evaluates the explicit half-line witness at offset b (in units of a);
    b = None uses the optimized value log(1 + 4 kappa) / 2 with
    kappa = epsilon / (q (1 - epsilon)).  Strictly increasing in a.
    """
    if a <= 0 or sigma <= 0:
        raise DomainError("need a > 0 and sigma > 0")
    if not 0.0 <= epsilon < 1.0 or not 0.0 < q <= 1.0:
        raise DomainError("need epsilon in [0, 1) and q in (0, 1]")
    lo = q * (1.0 - epsilon)
    hi = lo + epsilon
    if b is None:
        b = 0.5 * math.log1p(4.0 * epsilon / lo)
    shift = (sigma * b / a) if b <= 0.5 else (2.0 * sigma * b / a)
    val = lo * ndtr(a / sigma - shift) - hi * ndtr(-a / sigma - shift)
    return float(max(val, 0.0))
