"""Exact event-driven simulation of the twisted-wall hard-disk gas.

A step advances every disk ballistically to the globally next collision
(disk-wall or disk-disk) and resolves it.  Near-simultaneous events are
ordered deterministically (wall before pair, then lowest disk index), which
matters because the symmetric two-disk regime makes exact ties generic.
States are plain values; every function returns a fresh state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from . import _kernel
from .core import PhaseState, ToleranceSet
from .twist import TwistRule, time_reversal_rule

_DEFAULT_TOL = ToleranceSet()


@dataclass(frozen=True)
class Event:
    """A resolved collision: kind is 'wall' (disk i at wall k) or 'pair'."""

    kind: str
    time: float
    i: int
    j: Optional[int] = None
    wall: Optional[int] = None


@dataclass(frozen=True)
class StepOutcome:
    """Result of one engine step; event is None for the frozen outcome."""

    event: Optional[Event]
    state_after: PhaseState
    wall_angle_in: Optional[float] = None
    wall_angle_out: Optional[float] = None
    contact_y: Optional[float] = None

    @property
    def frozen(self) -> bool:
        return self.event is None


class ContractError(RuntimeError):
    """A resolve function was called on a state violating its precondition."""


def next_wall_event(state: PhaseState, i: int) -> Optional[tuple[float, int]]:
    """Time until disk i reaches a wall line, with the wall index, or None."""
    d = state.diameter
    dt, k = _kernel.wall_event_dt(
        float(state.positions[i, 1]), float(state.velocities[i, 1]), 0.5 * d, 1.0 - 0.5 * d
    )
    if k < 0:
        return None
    return dt, k


def next_pair_event(
    state: PhaseState, i: int, j: int, tol: ToleranceSet = _DEFAULT_TOL
) -> Optional[float]:
    """Earliest contact time of disks i and j over the periodic x images."""
    if i == j:
        raise ValueError("pair event needs two distinct disks")
    p = state.positions
    v = state.velocities
    dt = _kernel.pair_event_dt(
        float(p[j, 0] - p[i, 0]),
        float(p[j, 1] - p[i, 1]),
        float(v[j, 0] - v[i, 0]),
        float(v[j, 1] - v[i, 1]),
        state.diameter,
        tol.tol_root,
    )
    if math.isinf(dt):
        return None
    return dt


def resolve_disk_disk(
    state: PhaseState, i: int, j: int, tol: ToleranceSet = _DEFAULT_TOL
) -> PhaseState:
    """Elastic collision of disks i and j, which must be in contact and
    approaching.  Exchanges the normal velocity components (equal masses).
    """
    from .core import pair_distance

    dist = pair_distance(state, i, j)
    if abs(dist - state.diameter) > 1e-6:
        raise ContractError(f"disks {i},{j} not in contact: distance {dist!r}")
    out = state.copy()
    _kernel.resolve_pair_inplace(out.positions, out.velocities, i, j, state.diameter)
    return out


def resolve_wall(
    state: PhaseState, i: int, k: int, rule: TwistRule
) -> tuple[PhaseState, float, float]:
    """Wall collision of disk i at wall k; returns (state, phi, psi)."""
    v = float(state.velocities[i, 1])
    if v == 0.0:
        raise ContractError("tangential velocity at a wall collision")
    if (k == 0 and v > 0.0) or (k == 1 and v < 0.0):
        raise ContractError("velocity does not point into the wall")
    out = state.copy()
    phi, psi = _kernel.resolve_wall_inplace(
        out.positions, out.velocities, i, k, int(rule.family), rule.lam, state.diameter
    )
    return out, phi, psi


def step(state: PhaseState, rule: TwistRule, tol: ToleranceSet = _DEFAULT_TOL) -> StepOutcome:
    """Advance to the next event and resolve it, incrementing the counter."""
    out = state.copy()
    (status, dt, kind, i, jk, phi, psi, cy, _ui, _vi, _uj, _vj) = _kernel.step_inplace(
        out.positions,
        out.velocities,
        out.diameter,
        int(rule.family),
        rule.lam,
        tol.tol_event_tie,
        tol.tol_root,
    )
    if status == _kernel.FROZEN:
        return StepOutcome(event=None, state_after=out)
    out.time = state.time + dt
    out.collisions = state.collisions + 1
    if kind == 0:
        ev = Event("wall", out.time, int(i), wall=int(jk))
        return StepOutcome(ev, out, wall_angle_in=phi, wall_angle_out=psi)
    ev = Event("pair", out.time, int(i), j=int(jk))
    return StepOutcome(ev, out, contact_y=cy)


def run_until(
    state: PhaseState,
    rule: TwistRule,
    stop: Callable[[PhaseState, StepOutcome], bool],
    max_events: int,
    tol: ToleranceSet = _DEFAULT_TOL,
) -> tuple[PhaseState, int, str]:
    """Step until the predicate fires, the system freezes, or the budget runs
    out; returns (final state, events done, reason in {trapped, frozen, budget}).
    """
    if max_events <= 0:
        raise ValueError("max_events must be positive")
    current = state
    for n in range(max_events):
        outcome = step(current, rule, tol)
        if outcome.frozen:
            return current, n, "frozen"
        current = outcome.state_after
        if stop(current, outcome):
            return current, n + 1, "trapped"
    return current, max_events, "budget"


def run_for_events(
    state: PhaseState, rule: TwistRule, n_events: int, tol: ToleranceSet = _DEFAULT_TOL
) -> tuple[PhaseState, int, float, str]:
    """Batch-run exactly n_events (kernel path); returns
    (state, events done, elapsed time, reason in {budget, frozen}).
    """
    out = state.copy()
    done, elapsed, status = _kernel.run_events(
        out.positions,
        out.velocities,
        out.diameter,
        int(rule.family),
        rule.lam,
        n_events,
        tol.tol_event_tie,
        tol.tol_root,
    )
    out.time = state.time + elapsed
    out.collisions = state.collisions + int(done)
    reason = "frozen" if status == _kernel.FROZEN else "budget"
    return out, int(done), float(elapsed), reason


def reverse_velocities(state: PhaseState) -> PhaseState:
    """Negate every velocity vector; positions and clock are unchanged."""
    out = state.copy()
    np.negative(out.velocities, out=out.velocities)
    return out


def event_stream(
    state: PhaseState, rule: TwistRule, n_events: int, tol: ToleranceSet = _DEFAULT_TOL
) -> Iterator[StepOutcome]:
    """Yield successive step outcomes; stops early on a frozen state."""
    current = state
    for _ in range(n_events):
        outcome = step(current, rule, tol)
        yield outcome
        if outcome.frozen:
            return
        current = outcome.state_after


def state_difference(a: PhaseState, b: PhaseState) -> float:
    """Max-norm distance between two states, x compared on the circle."""
    dx = np.abs(a.positions[:, 0] - b.positions[:, 0])
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.abs(a.positions[:, 1] - b.positions[:, 1])
    dv = np.abs(a.velocities - b.velocities)
    return float(max(dx.max(), dy.max(), dv.max()))


def roundtrip_error(
    state: PhaseState, rule: TwistRule, n_events: int, tol: ToleranceSet = _DEFAULT_TOL
) -> float:
    """Run forward, reverse velocities, run the time-reversed rule the same
    number of events, realign the clock, reverse again; returns the max-norm
    deviation from the initial state.  For the self-reversible shear family
    the reversed leg uses the same rule; for the tan family it negates
    lambda.
    """
    fwd, done, elapsed, reason = run_for_events(state, rule, n_events, tol)
    if done != n_events:
        raise RuntimeError(f"forward run ended early ({reason})")
    back = reverse_velocities(fwd)
    rev_rule = time_reversal_rule(rule)
    back, done2, elapsed2, reason2 = run_for_events(back, rev_rule, n_events, tol)
    if done2 != n_events:
        raise RuntimeError(f"reversed run ended early ({reason2})")
    # the reversed leg ends one free flight short of the start; align clocks
    _kernel.advance_free(back.positions, back.velocities, elapsed - elapsed2)
    back = reverse_velocities(back)
    return state_difference(back, state)
