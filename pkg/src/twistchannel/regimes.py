"""Membership detectors for the stable-regime traps.

Three traps terminate the chaotic phase of a trajectory:

* U0 (tan family, lam > 0): the disks' x projections, padded by a sound
  bound on each disk's total future horizontal travel, are pairwise
  disjoint, so no disk-disk collision can ever happen again and every disk
  decays to vertical bouncing.
* W+/W- (tan family, lam < 0): |sum of u_i| exceeds sqrt(N(N-1)) (or
  N - eps0 in the cautious variant), after which the total horizontal
  momentum is non-decreasing and the gas ends up sliding along the channel.
* S* (reversible shear, N = 2): the disks move with opposite velocities and
  mirror-symmetric heights, colliding exactly at mid-channel.

Detectors are pure functions of the state, evaluated at collision events by
the experiment drivers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import PhaseState, Vec2, circular_x_distance


@dataclass(frozen=True)
class TrapSpec:
    """Which trap to detect, with thresholds where applicable."""

    kind: str  # "U0" | "Wpm" | "SStar"
    eps0: Optional[float] = None  # Wpm: use threshold N - eps0 instead of sqrt(N(N-1))
    tol_momentum: float = 1e-3  # SStar: bound on |p1 + p2|
    tol_center: float = 1e-3  # SStar: bound on |y1 + y2 - 1|

    def __post_init__(self):
        if self.kind not in ("U0", "Wpm", "SStar"):
            raise ValueError(f"unknown trap kind {self.kind!r}")
        if self.eps0 is not None and self.eps0 <= 0.0:
            raise ValueError("eps0 must be strictly positive")
        if self.tol_momentum <= 0.0 or self.tol_center <= 0.0:
            raise ValueError("S* tolerances must be strictly positive")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.eps0 is not None:
            out["eps0"] = self.eps0
        if self.kind == "SStar":
            out["tol_momentum"] = self.tol_momentum
            out["tol_center"] = self.tol_center
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrapSpec":
        return cls(
            kind=data["kind"],
            eps0=data.get("eps0"),
            tol_momentum=float(data.get("tol_momentum", 1e-3)),
            tol_center=float(data.get("tol_center", 1e-3)),
        )


@dataclass(frozen=True)
class DetectionResult:
    trapped: bool
    which: Optional[str] = None  # "U0" | "Wplus" | "Wminus" | "SStar"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trapped != (self.which is not None):
            raise ValueError("which must be present exactly when trapped")


def displacement_bound_s(state: PhaseState, i: int, lam: float) -> float:
    """Sound upper bound on disk i's total future |x| travel when bouncing
    alone under the tan rule with lam > 0: the slope |u/v| decays by exactly
    exp(-lam) per wall crossing, so the bound is the remaining current leg
    plus a full geometric tail.
    """
    if lam <= 0.0:
        raise ValueError("the displacement bound requires lam > 0")
    u = float(state.velocities[i, 0])
    v = float(state.velocities[i, 1])
    d = state.diameter
    if v == 0.0:
        return 0.0 if u == 0.0 else math.inf
    y = float(state.positions[i, 1])
    rem = (1.0 - 0.5 * d) - y if v > 0.0 else y - 0.5 * d
    rem = max(rem, 0.0)
    tail = (1.0 - d) / (1.0 - math.exp(-lam))
    return abs(u) / abs(v) * (rem + tail)


def in_U0(state: PhaseState, lam: float) -> DetectionResult:
    """Stable-center trap: every circular x gap exceeds d + s_i + s_j.

    Soundness contract: a trapped verdict implies no disk-disk collision
    ever occurs downstream (the bound is conservative, so detection may be
    late but never wrong).
    """
    n = state.n_disks
    d = state.diameter
    s = [displacement_bound_s(state, i, lam) for i in range(n)]
    margin = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            gap = circular_x_distance(
                float(state.positions[i, 0]), float(state.positions[j, 0])
            )
            margin = min(margin, gap - (d + s[i] + s[j]))
    if margin == math.inf:  # single disk: vacuously trapped
        margin = 0.5 - d
    if margin > 0.0:
        return DetectionResult(True, "U0", {"margin": margin})
    return DetectionResult(False, diagnostics={"margin": margin})


def wpm_threshold(n_disks: int, eps0: Optional[float] = None) -> float:
    """Trap boundary for the total u momentum at kinetic energy N/2."""
    if eps0 is None:
        return math.sqrt(n_disks * (n_disks - 1))
    return n_disks - eps0


def in_Wpm(state: PhaseState, eps0: Optional[float] = None) -> DetectionResult:
    """Sliding traps: sum(u_i) beyond +/- the threshold (strict)."""
    mu = float(state.velocities[:, 0].sum())
    thr = wpm_threshold(state.n_disks, eps0)
    if mu > thr:
        return DetectionResult(True, "Wplus", {"margin": mu - thr, "momentum": mu})
    if mu < -thr:
        return DetectionResult(True, "Wminus", {"margin": -mu - thr, "momentum": mu})
    return DetectionResult(False, diagnostics={"margin": -(thr - abs(mu)), "momentum": mu})


def sstar_deviation(state: PhaseState, contact_point: Vec2) -> tuple[float, float]:
    """Perturbation coordinates of the symmetric regime at a disk-disk
    collision: (|p1 + p2|, contact y - 0.5).
    """
    if state.n_disks != 2:
        raise ValueError("S* deviations are defined for exactly two disks")
    dv = state.velocities[0] + state.velocities[1]
    return float(math.hypot(dv[0], dv[1])), float(contact_point[1]) - 0.5


def in_sstar(state: PhaseState, spec: TrapSpec) -> DetectionResult:
    """Symmetric-regime membership: opposite velocities and mirrored heights
    within the spec's tolerances.
    """
    if state.n_disks != 2:
        raise ValueError("the S* regime is defined for exactly two disks")
    if spec.kind != "SStar":
        raise ValueError("spec.kind must be SStar")
    dv = state.velocities[0] + state.velocities[1]
    dv_norm = float(math.hypot(dv[0], dv[1]))
    ysym = abs(float(state.positions[0, 1] + state.positions[1, 1]) - 1.0)
    diag = {"dv_norm": dv_norm, "center_offset": ysym}
    if dv_norm < spec.tol_momentum and ysym < spec.tol_center:
        return DetectionResult(True, "SStar", diag)
    return DetectionResult(False, diagnostics=diag)


def detect(state: PhaseState, spec: TrapSpec, lam: float) -> DetectionResult:
    """Dispatch to the detector named by the spec."""
    if spec.kind == "U0":
        return in_U0(state, lam)
    if spec.kind == "Wpm":
        return in_Wpm(state, spec.eps0)
    return in_sstar(state, spec)
