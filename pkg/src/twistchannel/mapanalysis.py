"""One-particle interval-map analysis of the composed reflection map.

A lone particle alternates walls, so its incidence angle evolves by
g = f1 o f0 on [0, pi].  Under the opposition identity, g = h o h with
h(phi) = pi - f0(phi), an orientation-reversing homeomorphism whose unique
fixed point is the center of the map: a particle hitting a wall at that
angle retraces its path.  This module finds the fixed points of g,
classifies their stability, verifies the half-map decomposition, and pairs
the moving intervals exchanged by h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .twist import TwistRule, apply_f, f_derivative

PI = math.pi

_DERIV_STEP = 1e-6
_NEUTRAL_BAND = 1e-8
_ALL_FIXED_TOL = 1e-12


@dataclass(frozen=True)
class FixedPoint:
    phi: float
    stability: str  # "stable" | "unstable" | "neutral"
    is_center: bool
    multiplier: float  # numerical g'(phi)


@dataclass(frozen=True)
class DualPair:
    """Two open intervals exchanged by h, on opposite sides of the center;
    direction says whether their points move toward or away from it.
    """

    left: tuple[float, float]
    right: tuple[float, float]
    direction: str  # "toward" | "away"


@dataclass(frozen=True)
class IntervalMapReport:
    rule: TwistRule
    fixed_points: list[FixedPoint]
    all_fixed: bool
    center: float
    h_decomposition_residual: float
    dual_pairs: list[DualPair] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rule": self.rule.to_dict(),
            "all_fixed": self.all_fixed,
            "center": self.center,
            "h_decomposition_residual": self.h_decomposition_residual,
            "fixed_points": [
                {
                    "phi": fp.phi,
                    "stability": fp.stability,
                    "is_center": fp.is_center,
                    "multiplier": fp.multiplier,
                }
                for fp in self.fixed_points
            ],
            "dual_pairs": [
                {"left": list(p.left), "right": list(p.right), "direction": p.direction}
                for p in self.dual_pairs
            ],
        }


class FixedPointScan(NamedTuple):
    points: list[FixedPoint]
    all_fixed: bool


def eval_g(rule: TwistRule, phi: float) -> float:
    """g(phi) = f1(f0(phi)), the two-wall return map of the angle."""
    return apply_f(rule, 1, apply_f(rule, 0, phi))


def eval_h(rule: TwistRule, phi: float) -> float:
    """Half map h(phi) = pi - f0(phi); orientation reversing, h o h = g."""
    return PI - apply_f(rule, 0, phi)


def g_derivative(rule: TwistRule, phi: float, step: float = _DERIV_STEP) -> float:
    """Numerical g' by central difference (one-sided at the endpoints)."""
    lo = max(0.0, phi - step)
    hi = min(PI, phi + step)
    return (eval_g(rule, hi) - eval_g(rule, lo)) / (hi - lo)


def g_derivative_chain(rule: TwistRule, phi: float) -> float:
    """g' via the chain rule on the family derivatives (cross-check path)."""
    mid = apply_f(rule, 0, phi)
    return f_derivative(rule, 1, mid) * f_derivative(rule, 0, phi)


def _classify(multiplier: float) -> str:
    if abs(multiplier - 1.0) < _NEUTRAL_BAND:
        return "neutral"
    return "stable" if abs(multiplier) < 1.0 else "unstable"


def _bisect_root(fn, a: float, b: float, fa: float, fb: float, tol: float) -> float:
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0:
            return m
        if (fa < 0.0) != (fm < 0.0):
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def find_fixed_points(
    rule: TwistRule, grid_size: int = 4096, tol: float = 1e-13
) -> FixedPointScan:
    """Fixed points of g by sign-change bracketing plus bisection.

    The endpoints 0 and pi are always fixed and always included.  When the
    residual g(phi) - phi vanishes on the whole grid the map is the
    identity and the scan reports the degenerate all-fixed flag instead of
    a point list per grid node.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be >= 3")
    grid = np.linspace(0.0, PI, grid_size)
    resid = np.array([eval_g(rule, p) - p for p in grid])
    if np.max(np.abs(resid)) < _ALL_FIXED_TOL:
        center = decompose_h(rule, grid_size=256)[0]
        pts = [
            FixedPoint(0.0, "neutral", False, 1.0),
            FixedPoint(center, "neutral", True, 1.0),
            FixedPoint(PI, "neutral", False, 1.0),
        ]
        return FixedPointScan(pts, True)

    fn = lambda p: eval_g(rule, p) - p
    roots = [0.0, PI]
    for idx in range(1, grid_size - 2):
        a, b = grid[idx], grid[idx + 1]
        fa, fb = resid[idx], resid[idx + 1]
        if fa == 0.0:
            roots.append(float(a))
        elif (fa < 0.0) != (fb < 0.0):
            roots.append(_bisect_root(fn, float(a), float(b), float(fa), float(fb), tol))
    roots = sorted(roots)
    merged: list[float] = []
    for r in roots:
        if not merged or r - merged[-1] > 1e-9:
            merged.append(r)

    center = decompose_h(rule, grid_size=256)[0]
    points = []
    for r in merged:
        m = g_derivative(rule, r)
        points.append(FixedPoint(r, _classify(m), abs(r - center) < 1e-9, m))
    return FixedPointScan(points, False)


def decompose_h(rule: TwistRule, grid_size: int = 1024) -> tuple[float, float]:
    """Center (the unique fixed point of h, found by bisection) and the max
    grid residual of g - h o h.
    """
    fn = lambda p: eval_h(rule, p) - p
    # h is strictly decreasing from pi to 0, so h(phi) - phi changes sign once
    center = _bisect_root(fn, 0.0, PI, fn(0.0), fn(PI), 1e-14)
    worst = 0.0
    for i in range(grid_size + 1):
        p = PI * i / grid_size
        r = abs(eval_g(rule, p) - eval_h(rule, eval_h(rule, p)))
        if r > worst:
            worst = r
    return center, worst


def dual_intervals(rule: TwistRule, scan: FixedPointScan, center: float) -> list[DualPair]:
    """Pair the maximal moving intervals between consecutive fixed points
    with their images under h, labelled by the shared movement direction.
    """
    if scan.all_fixed:
        return []
    phis = [fp.phi for fp in scan.points]
    intervals = [(phis[i], phis[i + 1]) for i in range(len(phis) - 1)]
    intervals = [iv for iv in intervals if iv[1] - iv[0] > 1e-9]

    def direction(iv: tuple[float, float]) -> str:
        mid = 0.5 * (iv[0] + iv[1])
        return "toward" if abs(eval_g(rule, mid) - center) < abs(mid - center) else "away"

    def find_interval(p: float) -> int:
        for n, iv in enumerate(intervals):
            if iv[0] <= p <= iv[1]:
                return n
        return -1

    pairs: list[DualPair] = []
    seen: set[int] = set()
    for n, iv in enumerate(intervals):
        if n in seen:
            continue
        mid = 0.5 * (iv[0] + iv[1])
        partner = find_interval(eval_h(rule, mid))
        if partner < 0 or partner == n:
            continue
        seen.add(n)
        seen.add(partner)
        left, right = sorted((iv, intervals[partner]))
        pairs.append(DualPair(left, right, direction(iv)))
    return pairs


def one_particle_orbit(rule: TwistRule, phi0: float, n: int) -> np.ndarray:
    """Iterates phi, g(phi), ..., g^n(phi): the angle at every other wall."""
    if not (0.0 < phi0 < PI):
        raise ValueError("phi0 must lie in the open interval (0, pi)")
    out = np.empty(n + 1)
    out[0] = phi0
    p = phi0
    for i in range(1, n + 1):
        p = eval_g(rule, p)
        out[i] = p
    return out


def analyze(rule: TwistRule, grid_size: int = 4096, tol: float = 1e-13) -> IntervalMapReport:
    """Full report: fixed points, center, decomposition residual, dual pairs."""
    scan = find_fixed_points(rule, grid_size, tol)
    center, residual = decompose_h(rule, grid_size=min(grid_size, 4096))
    pairs = dual_intervals(rule, scan, center)
    return IntervalMapReport(
        rule=rule,
        fixed_points=scan.points,
        all_fixed=scan.all_fixed,
        center=center,
        h_decomposition_residual=residual,
        dual_pairs=pairs,
    )
