"""Wall-reflection rule families and their action on angles and velocities.

Angles of incidence/reflection are measured from the positive x axis, so
the physical range is [0, pi] and the x velocity component is |p| cos(phi)
at either wall.  Every family is an orientation-preserving homeomorphism of
[0, pi] fixing the endpoints, and the bottom/top pair (f0, f1) satisfies
the opposition identity f1(phi) = pi - f0(pi - phi), so neither wall can
dominate the drift.

Families:

* ``Specular``: psi = phi (the classical gas).
* ``TanCenter``: tan f(phi) = exp(lam) * tan(phi), same rule on both walls.
  In velocity form u+/|v+| = exp(-lam) * u-/|v-|.  Time reversal negates
  lam; lam > 0 makes pi/2 an attracting angle, lam < 0 a repelling one.
* ``ReversibleShear``: cot f_k(phi) = (-1)^k * lam + cot(phi).  Velocity
  form u+/|v+| = u-/|v-| + (-1)^k * lam.  Satisfies the time-reversal
  identity f(pi - f(phi)) = pi - phi, so the rule is its own reverse; the
  bottom wall pushes right and the top wall left for lam > 0 (shear flow).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core import Vec2

PI = math.pi


class Family(enum.IntEnum):
    SPECULAR = 0
    TAN_CENTER = 1
    REVERSIBLE_SHEAR = 2


_FAMILY_NAMES = {
    Family.SPECULAR: "specular",
    Family.TAN_CENTER: "tan_center",
    Family.REVERSIBLE_SHEAR: "reversible_shear",
}
_FAMILY_FROM_NAME = {v: k for k, v in _FAMILY_NAMES.items()}


@dataclass(frozen=True)
class TwistRule:
    """A wall collision law: family plus twist strength lambda."""

    family: Family
    lam: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")
        if self.family == Family.SPECULAR and self.lam != 0.0:
            object.__setattr__(self, "lam", 0.0)

    def to_dict(self) -> dict:
        return {"family": _FAMILY_NAMES[self.family], "lambda": self.lam}

    @classmethod
    def from_dict(cls, data: dict) -> "TwistRule":
        name = data["family"]
        if name not in _FAMILY_FROM_NAME:
            raise ValueError(f"unknown rule family {name!r}")
        return cls(_FAMILY_FROM_NAME[name], float(data.get("lambda", 0.0)))


def specular() -> TwistRule:
    return TwistRule(Family.SPECULAR)


def tan_center(lam: float) -> TwistRule:
    return TwistRule(Family.TAN_CENTER, lam)


def reversible_shear(lam: float) -> TwistRule:
    return TwistRule(Family.REVERSIBLE_SHEAR, lam)


def _check_wall(k: int) -> None:
    if k not in (0, 1):
        raise ValueError("wall index must be 0 (bottom) or 1 (top)")


def apply_f(rule: TwistRule, k: int, phi: float) -> float:
    """Reflection angle psi = f_k(phi) for incidence angle phi in [0, pi]."""
    _check_wall(k)
    if not (0.0 <= phi <= PI):
        raise ValueError(f"incidence angle {phi!r} outside [0, pi]")
    if rule.family == Family.SPECULAR or rule.lam == 0.0:
        return phi
    if phi == 0.0 or phi == PI:
        return phi
    s = math.sin(phi)
    c = math.cos(phi)
    if rule.family == Family.TAN_CENTER:
        # tan(psi) = e^lam tan(phi), branch-safe via atan2 with sin(psi) > 0
        return math.atan2(s, math.exp(-rule.lam) * c)
    # ReversibleShear: cot(psi) = (-1)^k lam + cot(phi)
    sign = 1.0 if k == 0 else -1.0
    return math.atan2(s, sign * rule.lam * s + c)


def f_derivative(rule: TwistRule, k: int, phi: float) -> float:
    """Derivative f_k'(phi) > 0; endpoint inputs return the one-sided limit."""
    _check_wall(k)
    if not (0.0 <= phi <= PI):
        raise ValueError(f"incidence angle {phi!r} outside [0, pi]")
    if rule.family == Family.SPECULAR or rule.lam == 0.0:
        return 1.0
    if rule.family == Family.TAN_CENTER:
        if phi == 0.0 or phi == PI:
            return math.exp(rule.lam)
        psi = apply_f(rule, k, phi)
        r = math.sin(psi) / math.sin(phi)
        return math.exp(-rule.lam) * r * r
    if phi == 0.0 or phi == PI:
        return 1.0
    psi = apply_f(rule, k, phi)
    r = math.sin(psi) / math.sin(phi)
    return r * r


def apply_twist_velocity(rule: TwistRule, k: int, p_in: Vec2) -> Vec2:
    """Post-collision velocity at wall k.  Speed is preserved; the outgoing
    slope u/|v| follows the family law.  p_in must point into the wall.
    """
    _check_wall(k)
    u, v = float(p_in[0]), float(p_in[1])
    if v == 0.0:
        raise ValueError("tangential velocity: no wall collision is possible")
    if (k == 0 and v > 0.0) or (k == 1 and v < 0.0):
        raise ValueError("velocity does not point into the wall")
    from . import _kernel

    u_out, v_out = _kernel.twist_velocity(u, v, k, int(rule.family), rule.lam)
    return Vec2(u_out, v_out)


def time_reversal_rule(rule: TwistRule) -> TwistRule:
    """Rule governing the time-reversed dynamics (reverse velocities, run
    forward).  TanCenter negates lambda; ReversibleShear is its own reverse.
    """
    if rule.family == Family.TAN_CENTER:
        return TwistRule(Family.TAN_CENTER, -rule.lam)
    return rule


def check_opposition(rule: TwistRule, grid_size: int) -> float:
    """Max residual of f1(phi) - (pi - f0(pi - phi)) over a phi grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    worst = 0.0
    for i in range(grid_size):
        phi = PI * i / (grid_size - 1)
        r = abs(apply_f(rule, 1, phi) - (PI - apply_f(rule, 0, PI - phi)))
        if r > worst:
            worst = r
    return worst
