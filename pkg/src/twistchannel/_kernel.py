"""Numba event kernels: the single source of collision arithmetic.

Everything here operates in place on (N, 2) float64 position/velocity
arrays.  The public engine API and the batch experiment drivers all funnel
through ``step_inplace`` so that a trajectory is bit-identical no matter
which entry point produced it.

Conventions: wall index 0 is y=0, 1 is y=1; disk centers touch the walls
at y = d/2 and y = 1 - d/2.  Event kinds: 0 = disk-wall, 1 = disk-disk.
Run status: 0 = budget exhausted / normal, 1 = trap detector fired,
2 = frozen (no future event exists).
"""

import math

import numpy as np
from numba import njit

# family codes, must match twist.Family
SPECULAR = 0
TAN_CENTER = 1
REVERSIBLE_SHEAR = 2

# run status codes
OK = 0
TRAPPED = 1
FROZEN = 2

INF = math.inf
NAN = math.nan


@njit(cache=True, nogil=True)
def twist_velocity(u, v, k, family, lam):
    """Outgoing velocity at wall k.  Speed preserved; outgoing slope u/|v|
    given by the family law.  lam == 0 reduces to exact specular reflection.
    """
    if family == SPECULAR or lam == 0.0:
        return u, -v
    speed = math.hypot(u, v)
    r = u / abs(v)
    if family == TAN_CENTER:
        r = math.exp(-lam) * r
    else:  # REVERSIBLE_SHEAR, sign (-1)^k
        r = r + lam if k == 0 else r - lam
    ar = abs(r)
    if ar <= 1.0e8:
        vout = speed / math.sqrt(1.0 + r * r)
        uout = r * vout
    elif ar == INF:
        vout = 0.0
        uout = speed if r > 0.0 else -speed
    else:
        # avoid r*r overflow; relative error below 1e-16 in this branch
        q = 1.0 / ar
        m = speed / math.sqrt(1.0 + q * q)
        uout = m if r > 0.0 else -m
        vout = m * q
    if k == 1:
        vout = -vout
    return uout, vout


@njit(cache=True, nogil=True)
def wall_event_dt(y, v, ylo, yhi):
    """Time for one disk to reach its wall line: (dt, wall k) or (inf, -1)."""
    if v > 0.0:
        dt = (yhi - y) / v
        k = 1
    elif v < 0.0:
        dt = (ylo - y) / v
        k = 0
    else:
        return INF, -1
    if dt < 0.0:
        dt = 0.0  # center fractionally past the line after a nearby snap
    return dt, k


@njit(cache=True, nogil=True)
def pair_event_dt(dx0, dy, du, dv, d, tol_disc):
    """Earliest contact time of a disk pair over x images m in {-1, 0, 1}.

    Requires approach ((dq + m ex) . dp < 0); near-grazing roots with
    discriminant <= tol_disc are dropped.  Returns inf when no collision.
    """
    a = du * du + dv * dv
    if a == 0.0:
        return INF
    best = INF
    for m in (-1.0, 0.0, 1.0):
        dx = dx0 + m
        b = dx * du + dy * dv
        if b < 0.0:
            c = dx * dx + dy * dy - d * d
            disc = b * b - a * c
            if disc > tol_disc:
                t = (-b - math.sqrt(disc)) / a
                if t < 0.0:
                    t = 0.0  # rounding-level residual overlap
                if t < best:
                    best = t
    return best


@njit(cache=True, nogil=True)
def next_event(pos, vel, d, tol_tie, tol_disc):
    """Scan all candidate events; return (dt, kind, i, jk).

    Candidates are visited in deterministic priority order (walls by disk
    index, then pairs lexicographically); a later candidate wins only when
    earlier by more than tol_tie, which makes near-simultaneous events
    resolve wall-first / lowest-index-first.
    """
    n = pos.shape[0]
    ylo = 0.5 * d
    yhi = 1.0 - 0.5 * d
    best = INF
    kind = -1
    ei = -1
    ejk = -1
    for i in range(n):
        dt, k = wall_event_dt(pos[i, 1], vel[i, 1], ylo, yhi)
        if dt < best - tol_tie:
            best = dt
            kind = 0
            ei = i
            ejk = k
    for i in range(n):
        for j in range(i + 1, n):
            dt = pair_event_dt(
                pos[j, 0] - pos[i, 0],
                pos[j, 1] - pos[i, 1],
                vel[j, 0] - vel[i, 0],
                vel[j, 1] - vel[i, 1],
                d,
                tol_disc,
            )
            if dt < best - tol_tie:
                best = dt
                kind = 1
                ei = i
                ejk = j
    return best, kind, ei, ejk


@njit(cache=True, nogil=True)
def advance_free(pos, vel, dt):
    """Ballistic advance of every disk, x wrapped to [0, 1)."""
    n = pos.shape[0]
    for i in range(n):
        x = pos[i, 0] + vel[i, 0] * dt
        x -= math.floor(x)
        if x >= 1.0:
            x = 0.0
        pos[i, 0] = x
        pos[i, 1] = pos[i, 1] + vel[i, 1] * dt


@njit(cache=True, nogil=True)
def resolve_wall_inplace(pos, vel, i, k, family, lam, d):
    """Apply the twist law to disk i at wall k; returns (phi, psi).

    The center is snapped exactly onto the wall line so rounding cannot
    schedule a phantom re-collision.
    """
    pos[i, 1] = 0.5 * d if k == 0 else 1.0 - 0.5 * d
    u = vel[i, 0]
    v = vel[i, 1]
    phi = math.atan2(abs(v), u)
    uo, vo = twist_velocity(u, v, k, family, lam)
    vel[i, 0] = uo
    vel[i, 1] = vo
    psi = math.atan2(abs(vo), uo)
    return phi, psi


@njit(cache=True, nogil=True)
def resolve_pair_inplace(pos, vel, i, j, d):
    """Elastic equal-mass exchange of normal velocity components.

    The gap is rescaled to exactly d by a symmetric shift (midpoint is
    preserved).  Returns the y coordinate of the contact point.
    """
    dx = pos[j, 0] - pos[i, 0]
    if dx > 0.5:
        dx -= 1.0
    elif dx < -0.5:
        dx += 1.0
    dy = pos[j, 1] - pos[i, 1]
    dist = math.hypot(dx, dy)
    nx = dx / dist
    ny = dy / dist
    h = 0.5 * (dist - d)
    pos[i, 0] += h * nx
    pos[i, 1] += h * ny
    pos[j, 0] -= h * nx
    pos[j, 1] -= h * ny
    for a in (i, j):
        x = pos[a, 0]
        x -= math.floor(x)
        if x >= 1.0:
            x = 0.0
        pos[a, 0] = x
    s = (vel[j, 0] - vel[i, 0]) * nx + (vel[j, 1] - vel[i, 1]) * ny
    ix = s * nx
    iy = s * ny
    vel[i, 0] += ix
    vel[i, 1] += iy
    vel[j, 0] -= ix
    vel[j, 1] -= iy
    return 0.5 * (pos[i, 1] + pos[j, 1])


@njit(cache=True, nogil=True)
def step_inplace(pos, vel, d, family, lam, tol_tie, tol_disc):
    """Advance to the next event and resolve it.

    Returns (status, dt, kind, i, jk, phi, psi, contact_y,
    ui_pre, vi_pre, uj_pre, vj_pre); angle and pair fields are nan when not
    applicable.  status FROZEN means no future event exists and the state
    was left untouched.
    """
    dt, kind, i, jk = next_event(pos, vel, d, tol_tie, tol_disc)
    if kind < 0:
        return FROZEN, 0.0, -1, -1, -1, NAN, NAN, NAN, NAN, NAN, NAN, NAN
    advance_free(pos, vel, dt)
    if kind == 0:
        ui = vel[i, 0]
        vi = vel[i, 1]
        phi, psi = resolve_wall_inplace(pos, vel, i, jk, family, lam, d)
        return OK, dt, 0, i, jk, phi, psi, NAN, ui, vi, NAN, NAN
    ui = vel[i, 0]
    vi = vel[i, 1]
    uj = vel[jk, 0]
    vj = vel[jk, 1]
    cy = resolve_pair_inplace(pos, vel, i, jk, d)
    return OK, dt, 1, i, jk, NAN, NAN, cy, ui, vi, uj, vj


# ---------------------------------------------------------------------------
# Batch drivers.  All mutate pos/vel in place and return summary tuples.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def run_events(pos, vel, d, family, lam, n_events, tol_tie, tol_disc):
    """Run exactly n_events events (or until frozen): (done, elapsed, status)."""
    done = 0
    t = 0.0
    for _ in range(n_events):
        st, dt, kind, i, jk, phi, psi, cy, a, b, c, e = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            return done, t, st
        t += dt
        done += 1
    return done, t, OK


@njit(cache=True, nogil=True)
def run_monitored(pos, vel, d, family, lam, n_events, tol_tie, tol_disc):
    """Run with conservation and geometry diagnostics.

    Returns (done, status, elapsed, max |dKE|, max |dMu|, min pair distance
    at events, max |p1+p2|, max |y1+y2-1|, wall_events, pair_events,
    max_pair_gap).  The two-disk symmetry diagnostics are 0 for N != 2.
    """
    n = pos.shape[0]
    ke0 = 0.0
    mu0 = 0.0
    for a in range(n):
        ke0 += 0.5 * (vel[a, 0] * vel[a, 0] + vel[a, 1] * vel[a, 1])
        mu0 += vel[a, 0]
    max_dke = 0.0
    max_dmu = 0.0
    min_pair = INF
    max_psum = 0.0
    max_ysym = 0.0
    wall_events = 0
    pair_events = 0
    max_pair_gap = 0
    last_pair = 0
    done = 0
    t = 0.0
    status = OK
    for _ in range(n_events):
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            status = st
            break
        t += dt
        done += 1
        ke = 0.0
        mu = 0.0
        for a in range(n):
            ke += 0.5 * (vel[a, 0] * vel[a, 0] + vel[a, 1] * vel[a, 1])
            mu += vel[a, 0]
        if abs(ke - ke0) > max_dke:
            max_dke = abs(ke - ke0)
        if abs(mu - mu0) > max_dmu:
            max_dmu = abs(mu - mu0)
        for a in range(n):
            for b in range(a + 1, n):
                dx = pos[b, 0] - pos[a, 0]
                if dx > 0.5:
                    dx -= 1.0
                elif dx < -0.5:
                    dx += 1.0
                dist = math.hypot(dx, pos[b, 1] - pos[a, 1])
                if dist < min_pair:
                    min_pair = dist
        if kind == 0:
            wall_events += 1
        else:
            pair_events += 1
            gap = done - last_pair
            if gap > max_pair_gap:
                max_pair_gap = gap
            last_pair = done
        if n == 2:
            ps = math.hypot(vel[0, 0] + vel[1, 0], vel[0, 1] + vel[1, 1])
            ys = abs(pos[0, 1] + pos[1, 1] - 1.0)
            if ps > max_psum:
                max_psum = ps
            if ys > max_ysym:
                max_ysym = ys
    if done > 0 and done - last_pair > max_pair_gap:
        max_pair_gap = done - last_pair
    return (
        done,
        status,
        t,
        max_dke,
        max_dmu,
        min_pair,
        max_psum,
        max_ysym,
        wall_events,
        pair_events,
        max_pair_gap,
    )


@njit(cache=True, nogil=True)
def u0_trapped(pos, vel, d, tail, s_buf):
    """Sound membership test for the stable-center trap.

    s_buf[i] receives an upper bound on disk i's total future horizontal
    travel if it bounces alone: |u/v| * (remaining leg + (1-d)/(1-e^-lam)),
    with tail the precomputed geometric factor; trapped when all circular
    x gaps exceed d + s_i + s_j.
    """
    n = pos.shape[0]
    ylo = 0.5 * d
    yhi = 1.0 - 0.5 * d
    for i in range(n):
        u = vel[i, 0]
        v = vel[i, 1]
        if v == 0.0:
            if u != 0.0:
                return False  # horizontal flight: unbounded travel
            s_buf[i] = 0.0
        else:
            rem = (yhi - pos[i, 1]) if v > 0.0 else (pos[i, 1] - ylo)
            if rem < 0.0:
                rem = 0.0
            s_buf[i] = abs(u) / abs(v) * (rem + tail)
    for i in range(n):
        for j in range(i + 1, n):
            g = abs(pos[i, 0] - pos[j, 0])
            if g > 0.5:
                g = 1.0 - g
            if g <= d + s_buf[i] + s_buf[j]:
                return False
    return True


@njit(cache=True, nogil=True)
def run_escape_u0(pos, vel, d, family, lam, budget, tol_tie, tol_disc):
    """Events until the stable-center trap fires: (tau, status).

    status TRAPPED on detection (tau = collision count, 0 if the initial
    state is already inside), OK when the budget censored the run.
    """
    tail = (1.0 - d) / (1.0 - math.exp(-lam))
    s_buf = np.empty(pos.shape[0])
    done = 0
    while True:
        if u0_trapped(pos, vel, d, tail, s_buf):
            return done, TRAPPED
        if done >= budget:
            return done, OK
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            return done, st
        done += 1


@njit(cache=True, nogil=True)
def run_escape_wpm(pos, vel, d, family, lam, threshold, budget, tol_tie, tol_disc):
    """Events until |total u momentum| exceeds threshold: (tau, status, side)."""
    n = pos.shape[0]
    done = 0
    while True:
        mu = 0.0
        for a in range(n):
            mu += vel[a, 0]
        if mu > threshold:
            return done, TRAPPED, 1
        if mu < -threshold:
            return done, TRAPPED, -1
        if done >= budget:
            return done, OK, 0
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            return done, st, 0
        done += 1


@njit(cache=True, nogil=True)
def run_u0_aftermath(pos, vel, d, family, lam, n_events, tol_tie, tol_disc):
    """Continue a trapped trajectory, auditing the trap's promises.

    Returns (done, status, pair_events, detector_dropouts): pair_events
    counts disk-disk collisions (soundness demands 0), detector_dropouts
    counts events at which the membership test no longer passed
    (forward invariance demands 0).
    """
    tail = (1.0 - d) / (1.0 - math.exp(-lam))
    s_buf = np.empty(pos.shape[0])
    pair_events = 0
    dropouts = 0
    done = 0
    status = OK
    for _ in range(n_events):
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            status = st
            break
        done += 1
        if kind == 1:
            pair_events += 1
        if not u0_trapped(pos, vel, d, tail, s_buf):
            dropouts += 1
    return done, status, pair_events, dropouts


@njit(cache=True, nogil=True)
def run_mu_monotone(pos, vel, d, family, lam, n_events, tol_tie, tol_disc):
    """Track per-event changes of the total u momentum.

    Returns (done, status, min_dmu, final_mu): min_dmu is the smallest
    event-wise increment of sum(u_i), which must not fall below rounding
    noise while the state stays in the right-moving trap.
    """
    n = pos.shape[0]
    mu = 0.0
    for a in range(n):
        mu += vel[a, 0]
    min_dmu = INF
    done = 0
    status = OK
    for _ in range(n_events):
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            status = st
            break
        done += 1
        mu_new = 0.0
        for a in range(n):
            mu_new += vel[a, 0]
        dmu = mu_new - mu
        if dmu < min_dmu:
            min_dmu = dmu
        mu = mu_new
    return done, status, min_dmu, mu


@njit(cache=True, nogil=True)
def run_drift(pos, vel, d, family, lam, n_events, sum_du, counts, tol_tie, tol_disc):
    """Accumulate (u_after - u_before) by u_before bin at wall collisions.

    Bins span [-1, 1] uniformly (len(counts) bins); wall events with
    u_before outside that range are ignored.  Returns (done, status,
    wall_events).
    """
    nb = counts.shape[0]
    binw = 2.0 / nb
    wall_events = 0
    done = 0
    status = OK
    for _ in range(n_events):
        st, dt, kind, i, jk, phi, psi, cy, ui, vi, uj, vj = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            status = st
            break
        done += 1
        if kind == 0:
            wall_events += 1
            if -1.0 <= ui <= 1.0:
                b = int((ui + 1.0) / binw)
                if b == nb:
                    b = nb - 1
                sum_du[b] += vel[i, 0] - ui
                counts[b] += 1
    return done, status, wall_events


@njit(cache=True, nogil=True)
def run_escape_sstar(
    pos, vel, d, family, lam, tol_momentum, tol_center, budget, tol_tie, tol_disc
):
    """Events until the two-disk symmetric regime fires: (tau, status)."""
    done = 0
    while True:
        dvn = math.hypot(vel[0, 0] + vel[1, 0], vel[0, 1] + vel[1, 1])
        ys = abs(pos[0, 1] + pos[1, 1] - 1.0)
        if dvn < tol_momentum and ys < tol_center:
            return done, TRAPPED
        if done >= budget:
            return done, OK
        st, dt, kind, i, jk, phi, psi, cy, a1, a2, a3, a4 = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            return done, st
        done += 1


@njit(cache=True, nogil=True)
def run_sstar_series(
    pos, vel, d, family, lam, max_pairs, budget, dv_out, ell_out, w_out, tol_tie, tol_disc
):
    """Record the two-disk symmetry deviations at disk-disk collisions.

    At each pair collision stores |p1+p2|, contact_y - 0.5, and the wall
    collision count of each disk over the preceding interval (w_out rows).
    Returns (pairs_recorded, done, status).
    """
    w0 = 0
    w1 = 0
    pairs = 0
    done = 0
    status = OK
    while done < budget and pairs < max_pairs:
        st, dt, kind, i, jk, phi, psi, cy, ui, vi, uj, vj = step_inplace(
            pos, vel, d, family, lam, tol_tie, tol_disc
        )
        if st != OK:
            status = st
            break
        done += 1
        if kind == 0:
            if i == 0:
                w0 += 1
            else:
                w1 += 1
        else:
            dv_out[pairs] = math.hypot(vel[0, 0] + vel[1, 0], vel[0, 1] + vel[1, 1])
            ell_out[pairs] = cy - 0.5
            w_out[pairs, 0] = w0
            w_out[pairs, 1] = w1
            w0 = 0
            w1 = 0
            pairs += 1
    return pairs, done, status
