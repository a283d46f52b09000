"""Numerical verification of the decay integrals of the symmetric regime.

Two mean quantities control the contraction of the symmetric two-disk
regime: mu1, the double integral over incidence and perturbation angles of
log[1 - (1 - f'(phi)^2) sin^2(beta - phi)], and mu2, the mean of
log(sin f(phi) / sin phi).  Both vanish for specular walls and are strictly
negative for a genuine time-reversible twist; their negativity is what
makes the momentum and contact-point perturbations decay.

The module also evaluates the auxiliary curve F(t) built from the
symmetric-coordinates representation w(s) of a reversible rule, which is
strictly increasing with mu2 = -F(1)/pi, giving an independent route to
the same number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import dblquad, quad

from .twist import Family, TwistRule, apply_f, f_derivative

PI = math.pi

_EPSABS = 1e-10
_EPSREL = 1e-11
_ERR_FLOOR = 1e-15
_ERR_LIMIT = 1e-7


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the target tolerance."""


class QuadResult(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class LemmaResult:
    """Both decay integrals for one rule and wall, with error estimates."""

    rule: TwistRule
    wall: int
    mu1: float
    mu1_error: float
    mu2: float
    mu2_error: float

    def to_dict(self) -> dict:
        return {
            "rule": self.rule.to_dict(),
            "wall": self.wall,
            "mu1": self.mu1,
            "mu1_error": self.mu1_error,
            "mu2": self.mu2,
            "mu2_error": self.mu2_error,
        }


@dataclass(frozen=True)
class WPath:
    """Samples of the symmetric coordinates s = (f+phi)/2, w = (f-phi)/2."""

    rule: TwistRule
    wall: int
    s: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray  # dw/ds = (f' - 1)/(f' + 1)


def _quad(fn, a: float, b: float) -> QuadResult:
    value, err = quad(fn, a, b, epsabs=_EPSABS, epsrel=_EPSREL, limit=200)
    if err > _ERR_LIMIT:
        raise QuadratureError(f"quadrature error estimate {err:g} above {_ERR_LIMIT:g}")
    return QuadResult(float(value), max(float(err), _ERR_FLOOR))


def beta_inner_integral(a: float) -> float:
    """Integral over a full turn of log[1 - (1 - a^2) sin^2(beta)].

    The shift by phi in the lemma integrand drops out by periodicity.  The
    integrand is smooth for a > 0 since 1 - (1-a^2) sin^2 >= a^2 > 0.
    """
    if a <= 0.0:
        raise ValueError("the inner integral requires a > 0")
    if a == 1.0:
        return 0.0
    coeff = 1.0 - a * a

    def integrand(beta: float) -> float:
        s = math.sin(beta)
        return math.log(1.0 - coeff * s * s)

    return _quad(integrand, 0.0, 2.0 * PI).value


def mu1(rule: TwistRule, k: int, method: str = "reduced") -> QuadResult:
    """The double decay integral over (phi, beta) for wall k.

    "reduced" integrates the (numerical) inner beta integral over phi;
    "full2d" evaluates the literal double integral.  The two routes agree
    within their combined error estimates, which is itself a useful check.
    """
    if method == "reduced":
        inner_err = 0.0

        def integrand(phi: float) -> float:
            nonlocal inner_err
            a = f_derivative(rule, k, phi)
            if a == 1.0:
                return 0.0
            coeff = 1.0 - a * a

            def beta_part(beta: float) -> float:
                s = math.sin(beta)
                return math.log(1.0 - coeff * s * s)

            val, err = quad(beta_part, 0.0, 2.0 * PI, epsabs=_EPSABS, epsrel=_EPSREL, limit=200)
            inner_err = max(inner_err, err)
            return val

        outer = _quad(integrand, 0.0, PI)
        return QuadResult(outer.value, max(outer.error + PI * inner_err, _ERR_FLOOR))

    if method == "full2d":

        def integrand2(beta: float, phi: float) -> float:
            a = f_derivative(rule, k, phi)
            s = math.sin(beta - phi)
            return math.log(1.0 - (1.0 - a * a) * s * s)

        value, err = dblquad(integrand2, 0.0, PI, 0.0, 2.0 * PI, epsabs=1e-9, epsrel=1e-9)
        if err > _ERR_LIMIT:
            raise QuadratureError(f"2d quadrature error estimate {err:g} above {_ERR_LIMIT:g}")
        return QuadResult(float(value), max(float(err), _ERR_FLOOR))

    raise ValueError(f"unknown mu1 method {method!r}")


def mu2(rule: TwistRule, k: int) -> QuadResult:
    """Mean of log(sin f(phi) / sin phi) over phi in [0, pi].

    At the endpoints the ratio tends to f'(0) and f'(pi); those limits are
    substituted analytically so the integrand is continuous on the closed
    interval.
    """

    def integrand(phi: float) -> float:
        if phi <= 0.0 or phi >= PI:
            return math.log(f_derivative(rule, k, phi))
        return math.log(math.sin(apply_f(rule, k, phi)) / math.sin(phi))

    res = _quad(integrand, 0.0, PI)
    return QuadResult(res.value / PI, max(res.error / PI, _ERR_FLOOR))


def lemma_report(rule: TwistRule, k: int) -> LemmaResult:
    m1 = mu1(rule, k)
    m2 = mu2(rule, k)
    return LemmaResult(rule, k, m1.value, m1.error, m2.value, m2.error)


def derivative_normalization(rule: TwistRule, k: int) -> float:
    """(1/pi) integral of f'(phi); equals 1 since f fixes both endpoints."""
    res = _quad(lambda phi: f_derivative(rule, k, phi), 0.0, PI)
    return res.value / PI


def _require_reversible(rule: TwistRule) -> None:
    if rule.family == Family.SPECULAR or rule.lam == 0.0:
        return  # w identically 0; every identity below holds trivially
    if rule.family != Family.REVERSIBLE_SHEAR:
        raise ValueError("this construction needs a time-reversible rule")


def w_path(rule: TwistRule, k: int, n: int = 512) -> WPath:
    """Sample the symmetric coordinates along a phi grid."""
    _require_reversible(rule)
    phis = np.linspace(0.0, PI, n)
    f = np.array([apply_f(rule, k, p) for p in phis])
    fp = np.array([f_derivative(rule, k, p) for p in phis])
    s = 0.5 * (f + phis)
    w = 0.5 * (f - phis)
    w_prime = (fp - 1.0) / (fp + 1.0)
    return WPath(rule, k, s, w, w_prime)


def symmetry_zero_integral(rule: TwistRule, k: int) -> float:
    """Integral of log(sin f / sin phi) against ds; zero for reversible
    rules because w is even about the midpoint in the s variable.
    """
    _require_reversible(rule)

    def integrand(phi: float) -> float:
        if phi <= 0.0 or phi >= PI:
            return 0.0
        ratio = math.log(math.sin(apply_f(rule, k, phi)) / math.sin(phi))
        return ratio * 0.5 * (1.0 + f_derivative(rule, k, phi))

    return _quad(integrand, 0.0, PI).value


def f_curve(rule: TwistRule, k: int, t_grid: Sequence[float]) -> np.ndarray:
    """F(t) = integral of log[sin(s + t w) / sin(s - t w)] dw over the
    w path of the rule, evaluated by pulling the integral back to phi.

    F(0) = 0, F is strictly increasing on [0, 1], and mu2 = -F(1)/pi.
    """
    _require_reversible(rule)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0.0) or np.any(t_grid > 1.0):
        raise ValueError("t grid must lie in [0, 1]")

    def make_integrand(t: float):
        def integrand(phi: float) -> float:
            if phi <= 0.0 or phi >= PI:
                return 0.0
            f = apply_f(rule, k, phi)
            s = 0.5 * (f + phi)
            w = 0.5 * (f - phi)
            wp = 0.5 * (f_derivative(rule, k, phi) - 1.0)
            return math.log(math.sin(s + t * w) / math.sin(s - t * w)) * wp

        return integrand

    out = np.empty(t_grid.size)
    for idx, t in enumerate(t_grid):
        if t == 0.0:
            out[idx] = 0.0
        else:
            out[idx] = _quad(make_integrand(float(t)), 0.0, PI).value
    return out
