"""Phase-space data model, observables, and initial-state sampling.

State convention: disk centers live in the unit square, x wrapped to [0,1)
(periodic), y confined to [d/2, 1-d/2] by the rigid walls.  The total
kinetic energy is normalized to N/2, i.e. sum of squared speeds equals N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from .twist import TwistRule


class Vec2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class ToleranceSet:
    """Numerical tolerances used by the engine and validators."""

    tol_energy: float = 1e-7
    tol_overlap: float = 1e-9
    tol_event_tie: float = 1e-12
    tol_root: float = 1e-12

    def __post_init__(self):
        for name in ("tol_energy", "tol_overlap", "tol_event_tie", "tol_root"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class PhaseState:
    """Positions and velocities of N disks plus diameter and event clock.

    ``positions`` and ``velocities`` are (N, 2) float arrays; ``collisions``
    counts resolved events (the discrete time of the collision map).
    """

    positions: np.ndarray
    velocities: np.ndarray
    diameter: float
    time: float = 0.0
    collisions: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2:
            raise ValueError("positions and velocities must both be (N, 2) arrays")
        if not (0.0 < self.diameter < 1.0):
            raise ValueError("diameter must lie in (0, 1)")

    @property
    def n_disks(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "PhaseState":
        return PhaseState(
            self.positions.copy(),
            self.velocities.copy(),
            self.diameter,
            self.time,
            self.collisions,
        )

    def validate(self, tol: ToleranceSet = ToleranceSet()) -> None:
        """Raise ValueError on any violated state invariant."""
        n = self.n_disks
        d = self.diameter
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("non-finite state component")
        x = self.positions[:, 0]
        y = self.positions[:, 1]
        if np.any(x < 0.0) or np.any(x >= 1.0):
            raise ValueError("x positions must be wrapped to [0, 1)")
        if np.any(y < 0.5 * d - tol.tol_overlap) or np.any(y > 1.0 - 0.5 * d + tol.tol_overlap):
            raise ValueError("y positions violate wall clearance")
        for i in range(n):
            for j in range(i + 1, n):
                if pair_distance(self, i, j) < d - tol.tol_overlap:
                    raise ValueError(f"disks {i} and {j} overlap")
        ke = kinetic_energy(self)
        if abs(ke - 0.5 * n) > tol.tol_energy:
            raise ValueError(f"kinetic energy {ke!r} deviates from N/2")


@dataclass(frozen=True)
class SimParams:
    """Run parameters for one trajectory."""

    n_disks: int
    diameter: float
    rule: "TwistRule"
    max_events: int = 10_000_000
    seed: int = 0
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)

    def __post_init__(self):
        if self.n_disks < 1:
            raise ValueError("n_disks must be >= 1")
        if not (0.0 < self.diameter < 1.0 / self.n_disks):
            raise ValueError("diameter must satisfy 0 < d < 1/N")
        if self.max_events <= 0:
            raise ValueError("max_events must be positive")

    def with_rule(self, rule: "TwistRule") -> "SimParams":
        return replace(self, rule=rule)


def kinetic_energy(state: PhaseState) -> float:
    """Total kinetic energy (unit masses)."""
    return 0.5 * float(np.sum(state.velocities * state.velocities))


def horizontal_momentum(state: PhaseState) -> float:
    """Sum of the x velocity components, conserved by the untwisted gas."""
    return float(np.sum(state.velocities[:, 0]))


def circular_x_distance(a: float, b: float) -> float:
    """Distance between x coordinates on the unit circle, in [0, 0.5]."""
    g = abs(a - b)
    return min(g, 1.0 - g)


def pair_distance(state: PhaseState, i: int, j: int) -> float:
    """Center distance of disks i, j over the periodic x images."""
    dx = circular_x_distance(float(state.positions[i, 0]), float(state.positions[j, 0]))
    dy = float(state.positions[i, 1] - state.positions[j, 1])
    return math.hypot(dx, dy)


class PackingError(RuntimeError):
    """Raised when rejection sampling cannot place the disks."""


def sample_initial_state(
    params: SimParams,
    rng: np.random.Generator,
    max_attempts: int = 10_000,
) -> PhaseState:
    """Draw a random valid state: positions uniform in the admissible region
    (rejection sampling), velocities uniform on the sphere of total kinetic
    energy N/2.
    """
    n = params.n_disks
    d = params.diameter
    positions = None
    for _ in range(max_attempts):
        x = rng.uniform(0.0, 1.0, size=n)
        y = rng.uniform(0.5 * d, 1.0 - 0.5 * d, size=n)
        ok = True
        for i in range(n):
            for j in range(i + 1, n):
                gx = circular_x_distance(float(x[i]), float(x[j]))
                if math.hypot(gx, float(y[i] - y[j])) < d:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            positions = np.column_stack([x, y])
            break
    if positions is None:
        raise PackingError(
            f"could not place {n} disks of diameter {d} in {max_attempts} attempts"
        )

    v = rng.standard_normal(2 * n)
    norm = math.sqrt(float(np.dot(v, v)))
    while norm == 0.0:  # probability zero, but keep the contract total
        v = rng.standard_normal(2 * n)
        norm = math.sqrt(float(np.dot(v, v)))
    v *= math.sqrt(n) / norm
    velocities = v.reshape(n, 2)

    return PhaseState(positions, velocities, d)
