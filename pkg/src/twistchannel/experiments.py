"""Monte Carlo experiments: escape-time scans, scaling fits, the wall-drift
curve, and perturbation decay of the symmetric two-disk regime.

Trajectories are independent; every trajectory derives its own RNG from
(master seed, lambda index, sample index), so scan results are identical
for any worker count and any scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernel
from .core import PhaseState, SimParams, ToleranceSet, sample_initial_state
from .regimes import TrapSpec, wpm_threshold
from .twist import Family, TwistRule


def trajectory_rng(master_seed: int, lam_index: int, sample_index: int) -> np.random.Generator:
    """Deterministic per-trajectory stream, independent of execution order."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(lam_index, sample_index))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# escape times
# ---------------------------------------------------------------------------


def _check_trap_rule(trap: TrapSpec, rule: TwistRule) -> None:
    if trap.kind == "U0":
        if rule.family != Family.TAN_CENTER or rule.lam <= 0.0:
            raise ValueError("the U0 trap requires the tan family with lam > 0")
    elif trap.kind == "Wpm":
        if rule.family != Family.TAN_CENTER or rule.lam >= 0.0:
            raise ValueError("the W+/- traps require the tan family with lam < 0")
    else:
        if rule.family != Family.REVERSIBLE_SHEAR:
            raise ValueError("the S* trap requires the reversible shear family")


def escape_state(
    trap: TrapSpec, params: SimParams, state: PhaseState
) -> tuple[Optional[int], PhaseState]:
    """Run until the trap fires; returns (tau or None if censored, end state).

    tau counts collision-map events, 0 when the given state is already
    inside the trap.  Frozen runs are reported as censored.
    """
    _check_trap_rule(trap, params.rule)
    tol = params.tolerances
    pos = state.positions.copy()
    vel = state.velocities.copy()
    d = state.diameter
    fam = int(params.rule.family)
    lam = params.rule.lam
    if trap.kind == "U0":
        tau, status = _kernel.run_escape_u0(
            pos, vel, d, fam, lam, params.max_events, tol.tol_event_tie, tol.tol_root
        )
    elif trap.kind == "Wpm":
        thr = wpm_threshold(params.n_disks, trap.eps0)
        tau, status, _side = _kernel.run_escape_wpm(
            pos, vel, d, fam, lam, thr, params.max_events, tol.tol_event_tie, tol.tol_root
        )
    else:
        tau, status = _kernel.run_escape_sstar(
            pos,
            vel,
            d,
            fam,
            lam,
            trap.tol_momentum,
            trap.tol_center,
            params.max_events,
            tol.tol_event_tie,
            tol.tol_root,
        )
    end = PhaseState(pos, vel, d, collisions=state.collisions + int(tau))
    if status == _kernel.TRAPPED:
        return int(tau), end
    return None, end


def escape_time(params: SimParams, trap: TrapSpec, rng: np.random.Generator) -> Optional[int]:
    """Escape time of one random trajectory; None when censored by budget."""
    state = sample_initial_state(params, rng)
    tau, _end = escape_state(trap, params, state)
    return tau


# ---------------------------------------------------------------------------
# scan aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeScanConfig:
    lambda_grid: tuple[float, ...]
    samples_per_lambda: int
    trap: TrapSpec
    sim: SimParams
    workers: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if len(self.lambda_grid) == 0 or any(l == 0.0 for l in self.lambda_grid):
            raise ValueError("lambda grid must be non-empty with nonzero entries")
        if self.samples_per_lambda < 1:
            raise ValueError("samples_per_lambda must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))


@dataclass
class ScanPartial:
    """Per-sample escape records for one lambda; mergeable across workers.

    Merging is a keyed union, so the final statistics are reduced in sample
    order and do not depend on how the work was partitioned.
    """

    key: tuple
    records: dict[int, tuple[Optional[int], bool]] = field(default_factory=dict)

    def add(self, sample_index: int, tau: Optional[int], anomaly: bool) -> None:
        if sample_index in self.records:
            raise ValueError(f"duplicate sample index {sample_index}")
        self.records[sample_index] = (tau, anomaly)


def merge_partials(partials: Sequence[ScanPartial]) -> ScanPartial:
    """Associative, commutative merge of scan partials from one config."""
    if not partials:
        raise ValueError("nothing to merge")
    keys = {p.key for p in partials}
    if len(keys) != 1:
        raise ValueError(f"partials from different configs: {sorted(keys)}")
    out = ScanPartial(key=partials[0].key)
    for p in partials:
        for idx, rec in p.records.items():
            out.add(idx, rec[0], rec[1])
    return out


@dataclass(frozen=True)
class EscapeStats:
    lam: float
    n_samples: int
    mean_tau: float
    stderr: float
    censored_count: int
    anomaly_count: int
    hist_edges: tuple[int, ...]
    hist_counts: tuple[int, ...]
    ks_exponential: float


def _tau_histogram(taus: Sequence[int], budget: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Counts in bins [0,1), [1,2), [2,4), ... doubling up to the budget."""
    edges = [0, 1]
    while edges[-1] < budget:
        edges.append(edges[-1] * 2)
    counts = [0] * (len(edges) - 1)
    for t in taus:
        k = 0 if t < 1 else min(int(math.log2(t)) + 1, len(counts) - 1)
        counts[k] += 1
    return tuple(edges), tuple(counts)


def _ks_exponential(taus: np.ndarray) -> float:
    """KS distance between the tau sample and Exp(mean tau)."""
    t = np.sort(taus.astype(float))
    n = t.size
    if n == 0 or t.mean() <= 0.0:
        return math.nan
    cdf = 1.0 - np.exp(-t / t.mean())
    d_plus = float(np.max(np.arange(1, n + 1) / n - cdf))
    d_minus = float(np.max(cdf - np.arange(0, n) / n))
    return max(d_plus, d_minus)


def finalize_partial(partial: ScanPartial, lam: float, budget: int) -> EscapeStats:
    """Collapse per-sample records (in sample order) into summary statistics."""
    idx = sorted(partial.records)
    taus = []
    censored = 0
    anomalies = 0
    for i in idx:
        tau, anomaly = partial.records[i]
        if anomaly:
            anomalies += 1
        elif tau is None:
            censored += 1
        else:
            taus.append(tau)
    arr = np.array(taus, dtype=np.int64)
    if arr.size:
        mean = float(arr.mean())
        stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    else:
        mean = math.nan
        stderr = math.nan
    edges, counts = _tau_histogram(taus, budget)
    return EscapeStats(
        lam=lam,
        n_samples=len(idx),
        mean_tau=mean,
        stderr=stderr,
        censored_count=censored,
        anomaly_count=anomalies,
        hist_edges=edges,
        hist_counts=counts,
        ks_exponential=_ks_exponential(arr),
    )


def _partial_key(cfg: EscapeScanConfig, lam: float) -> tuple:
    return (
        lam,
        cfg.samples_per_lambda,
        cfg.sim.n_disks,
        cfg.sim.diameter,
        cfg.sim.max_events,
        cfg.trap.kind,
        cfg.master_seed,
    )


def run_lambda_partial(
    cfg: EscapeScanConfig, lam_index: int, sample_indices: Sequence[int]
) -> ScanPartial:
    """Escape runs for a slice of sample indices at one grid lambda."""
    lam = cfg.lambda_grid[lam_index]
    params = cfg.sim.with_rule(TwistRule(cfg.sim.rule.family, lam))
    partial = ScanPartial(key=_partial_key(cfg, lam))
    for si in sample_indices:
        rng = trajectory_rng(cfg.master_seed, lam_index, si)
        try:
            tau = escape_time(params, cfg.trap, rng)
            partial.add(si, tau, False)
        except Exception:
            partial.add(si, None, True)
    return partial


def escape_scan(cfg: EscapeScanConfig) -> list[EscapeStats]:
    """Per-lambda escape statistics from independent seeded trajectories."""
    stats = []
    for li, lam in enumerate(cfg.lambda_grid):
        all_idx = range(cfg.samples_per_lambda)
        if cfg.workers == 1:
            partial = run_lambda_partial(cfg, li, all_idx)
        else:
            chunks = np.array_split(np.asarray(all_idx), cfg.workers)
            with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
                parts = list(
                    ex.map(lambda ch: run_lambda_partial(cfg, li, [int(s) for s in ch]), chunks)
                )
            partial = merge_partials([p for p in parts if p.records])
        stats.append(finalize_partial(partial, lam, cfg.sim.max_events))
    return stats


# ---------------------------------------------------------------------------
# scaling-law fits
# ---------------------------------------------------------------------------


class SingularFitError(RuntimeError):
    """The least-squares design matrix is rank deficient."""


@dataclass(frozen=True)
class FitResult:
    model: str  # "linear" | "loglog_refined"
    a: float
    b: Optional[float]
    c: float
    rms_residual: float

    @property
    def coefficients(self) -> tuple:
        return (self.a, self.c) if self.b is None else (self.a, self.b, self.c)


def fit_xy(x: np.ndarray, y: np.ndarray, model: str = "linear") -> FitResult:
    """Ordinary least squares of y on {x, 1} or {x, ln x, 1}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model == "linear":
        if x.size < 3:
            raise ValueError("the linear fit needs at least 3 points")
        design = np.column_stack([x, np.ones_like(x)])
    elif model == "loglog_refined":
        if x.size < 4:
            raise ValueError("the refined fit needs at least 4 points")
        if np.any(x <= 0.0):
            raise ValueError("the refined fit needs x > 0 for the ln x basis term")
        design = np.column_stack([x, np.log(x), np.ones_like(x)])
    else:
        raise ValueError(f"unknown fit model {model!r}")
    coef, _res, rank, _sv = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SingularFitError("design matrix is rank deficient")
    resid = y - design @ coef
    rms = float(np.sqrt(np.mean(resid * resid)))
    if model == "linear":
        return FitResult(model, float(coef[0]), None, float(coef[1]), rms)
    return FitResult(model, float(coef[0]), float(coef[1]), float(coef[2]), rms)


def fit_scaling(stats: Sequence[EscapeStats], model: str = "linear") -> FitResult:
    """Fit ln(mean tau) against -ln |lambda| across a scan."""
    lams = [s.lam for s in stats]
    if any(l == 0.0 for l in lams):
        raise ValueError("lambda must be nonzero")
    if len({l > 0.0 for l in lams}) != 1:
        raise ValueError("all lambdas must have the same sign")
    for s in stats:
        if not (s.mean_tau > 0.0):
            raise ValueError(f"mean tau at lambda={s.lam} is not positive")
    x = np.array([-math.log(abs(l)) for l in lams])
    y = np.array([math.log(s.mean_tau) for s in stats])
    return fit_xy(x, y, model)


# ---------------------------------------------------------------------------
# wall-drift curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftCurve:
    u_edges: np.ndarray  # n_bins + 1 edges over [-1, 1]
    sum_du: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.u_edges[:-1] + self.u_edges[1:])

    @property
    def mean_du(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.counts > 0, self.sum_du / self.counts, np.nan)


def drift_curve(
    params: SimParams,
    samples: int,
    events_per_sample: int,
    n_bins: int = 40,
    workers: int = 1,
) -> DriftCurve:
    """Average change of u at wall collisions, binned by the incoming u.

    Accumulates over `samples` independent random trajectories of
    `events_per_sample` events each; uses params.seed as the master seed.
    """
    if params.rule.family != Family.TAN_CENTER:
        raise ValueError("the drift curve is defined for the tan family")
    tol = params.tolerances
    fam = int(params.rule.family)
    lam = params.rule.lam

    def task(si: int) -> tuple[np.ndarray, np.ndarray]:
        rng = trajectory_rng(params.seed, 0, si)
        state = sample_initial_state(params, rng)
        sums = np.zeros(n_bins)
        counts = np.zeros(n_bins, dtype=np.int64)
        _kernel.run_drift(
            state.positions,
            state.velocities,
            params.diameter,
            fam,
            lam,
            events_per_sample,
            sums,
            counts,
            tol.tol_event_tie,
            tol.tol_root,
        )
        return sums, counts

    if workers == 1:
        results = [task(si) for si in range(samples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(task, range(samples)))
    total_sum = np.zeros(n_bins)
    total_counts = np.zeros(n_bins, dtype=np.int64)
    for sums, counts in results:  # fixed sample order: bit-stable totals
        total_sum += sums
        total_counts += counts
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    return DriftCurve(edges, total_sum, total_counts)


# ---------------------------------------------------------------------------
# symmetric-regime decay
# ---------------------------------------------------------------------------


def make_sstar_state(
    diameter: float, x0: float = 0.22, y0: float = 0.31, angle: float = 1.15
) -> PhaseState:
    """An exact symmetric state: mirrored positions, opposite unit velocities."""
    positions = np.array([[x0, y0], [x0 + 0.5, 1.0 - y0]])
    positions[1, 0] -= math.floor(positions[1, 0])
    u, v = math.cos(angle), math.sin(angle)
    velocities = np.array([[u, v], [-u, -v]])
    return PhaseState(positions, velocities, diameter)


@dataclass(frozen=True)
class SStarDecayResult:
    dv: np.ndarray  # |p1 + p2| at each disk-disk collision
    ell: np.ndarray  # contact y - 0.5
    wall_counts: np.ndarray  # (n_pairs, 2) wall hits per disk per interval
    m: np.ndarray  # cumulative count of odd-parity intervals
    n_odd: int
    n_even: int
    n_mixed: int
    exact: bool  # both series below the rounding floor throughout
    slope_dv: Optional[float]  # regression slope of log|dv| on m
    slope_ell: Optional[float]
    events: int

    EXACT_FLOOR = 1e-14


def _decay_slope(m: np.ndarray, series: np.ndarray) -> Optional[float]:
    mask = series > SStarDecayResult.EXACT_FLOOR
    if mask.sum() < 2 or np.unique(m[mask]).size < 2:
        return None
    return float(np.polyfit(m[mask], np.log(series[mask]), 1)[0])


def sstar_decay(
    params: SimParams,
    perturbation: float,
    n_pair_collisions: int,
    budget: Optional[int] = None,
) -> SStarDecayResult:
    """Track the decay of both symmetry perturbations of the S* regime.

    Starts from the exact symmetric state, displaced by `perturbation` in
    one velocity component and one height; records |p1+p2| and the contact
    offset at each disk-disk collision together with the parity of the wall
    collisions in between.  Only intervals where both disks hit the walls
    an odd number of times change the perturbations, so the regression
    abscissa is the running count m of such intervals.
    """
    if params.rule.family != Family.REVERSIBLE_SHEAR:
        raise ValueError("S* decay requires the reversible shear family")
    if params.n_disks != 2:
        raise ValueError("S* decay is defined for exactly two disks")
    state = make_sstar_state(params.diameter)
    if perturbation != 0.0:
        state.velocities[1, 0] += perturbation
        state.positions[1, 1] += perturbation
    if budget is None:
        budget = max(10_000, 20 * n_pair_collisions)
    tol = params.tolerances
    dv = np.empty(n_pair_collisions)
    ell = np.empty(n_pair_collisions)
    walls = np.zeros((n_pair_collisions, 2), dtype=np.int64)
    pairs, done, _status = _kernel.run_sstar_series(
        state.positions,
        state.velocities,
        params.diameter,
        int(params.rule.family),
        params.rule.lam,
        n_pair_collisions,
        budget,
        dv,
        ell,
        walls,
        tol.tol_event_tie,
        tol.tol_root,
    )
    pairs = int(pairs)
    dv = dv[:pairs]
    ell = np.abs(ell[:pairs])
    walls = walls[:pairs]

    odd = (walls[:, 0] % 2 == 1) & (walls[:, 1] % 2 == 1)
    even = (walls[:, 0] % 2 == 0) & (walls[:, 1] % 2 == 0)
    m = np.cumsum(odd.astype(np.int64))
    exact = bool(
        pairs > 0
        and dv.max(initial=0.0) < SStarDecayResult.EXACT_FLOOR
        and ell.max(initial=0.0) < SStarDecayResult.EXACT_FLOOR
    )
    slope_dv = None if exact else _decay_slope(m, dv)
    slope_ell = None if exact else _decay_slope(m, ell)
    return SStarDecayResult(
        dv=dv,
        ell=ell,
        wall_counts=walls,
        m=m,
        n_odd=int(odd.sum()),
        n_even=int(even.sum()),
        n_mixed=int(pairs - odd.sum() - even.sum()),
        exact=exact,
        slope_dv=slope_dv,
        slope_ell=slope_ell,
        events=int(done),
    )


# ---------------------------------------------------------------------------
# monitored batch runs (conservation and regime diagnostics)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonitoredRun:
    events: int
    status: str  # "budget" | "frozen"
    elapsed: float
    max_energy_drift: float
    max_momentum_drift: float
    min_pair_distance: float
    max_momentum_sum: float  # N=2: max |p1+p2| over events
    max_center_offset: float  # N=2: max |y1+y2-1| over events
    wall_events: int
    pair_events: int
    max_pair_gap: int


def monitored_run(
    state: PhaseState, rule: TwistRule, n_events: int, params: Optional[SimParams] = None
) -> MonitoredRun:
    """Batch-run with conservation/geometry audits (state is not mutated)."""
    tol = params.tolerances if params is not None else ToleranceSet()
    pos = state.positions.copy()
    vel = state.velocities.copy()
    (
        done,
        status,
        elapsed,
        max_dke,
        max_dmu,
        min_pair,
        max_psum,
        max_ysym,
        wall_events,
        pair_events,
        max_gap,
    ) = _kernel.run_monitored(
        pos,
        vel,
        state.diameter,
        int(rule.family),
        rule.lam,
        n_events,
        tol.tol_event_tie,
        tol.tol_root,
    )
    return MonitoredRun(
        events=int(done),
        status="frozen" if status == _kernel.FROZEN else "budget",
        elapsed=float(elapsed),
        max_energy_drift=float(max_dke),
        max_momentum_drift=float(max_dmu),
        min_pair_distance=float(min_pair),
        max_momentum_sum=float(max_psum),
        max_center_offset=float(max_ysym),
        wall_events=int(wall_events),
        pair_events=int(pair_events),
        max_pair_gap=int(max_gap),
    )
