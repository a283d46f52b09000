"""Hard-disk gas in a semi-periodic channel with twisting wall reflections.

The channel is the unit square with rigid walls at y=0 and y=1 and periodic
boundary conditions in x.  Disk-disk collisions are elastic; wall collisions
preserve speed but twist the reflection angle according to a configurable
rule.  The package provides an exact event-driven simulator, detectors for
the stable regimes this dynamics collapses into, Monte Carlo escape-time
experiments with scaling-law fits, a one-particle interval-map analyzer, and
numerical verification of the decay integrals behind the symmetric regime.
"""

from .core import (
    PhaseState,
    SimParams,
    ToleranceSet,
    Vec2,
    circular_x_distance,
    horizontal_momentum,
    kinetic_energy,
    sample_initial_state,
)
from .twist import (
    Family,
    TwistRule,
    apply_f,
    apply_twist_velocity,
    check_opposition,
    f_derivative,
    time_reversal_rule,
)
from .engine import Event, StepOutcome, reverse_velocities, run_until, step

__all__ = [
    "PhaseState",
    "SimParams",
    "ToleranceSet",
    "Vec2",
    "circular_x_distance",
    "horizontal_momentum",
    "kinetic_energy",
    "sample_initial_state",
    "Family",
    "TwistRule",
    "apply_f",
    "apply_twist_velocity",
    "check_opposition",
    "f_derivative",
    "time_reversal_rule",
    "Event",
    "StepOutcome",
    "reverse_velocities",
    "run_until",
    "step",
]
