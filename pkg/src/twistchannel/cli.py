"""Command-line interface: config handling, subcommands, serialization.

Subcommands: simulate, escape-scan, drift, sstar-decay, map-analyze,
lemmas.  Runs are reproducible from a config JSON plus a master seed;
floats are printed with 17 significant digits so outputs are exact.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .core import PhaseState, SimParams, sample_initial_state
from .engine import event_stream
from .experiments import (
    EscapeScanConfig,
    drift_curve,
    escape_scan,
    fit_scaling,
    merge_partials,
    sstar_decay,
    trajectory_rng,
)
from .mapanalysis import analyze
from .quadrature import f_curve, lemma_report
from .regimes import TrapSpec
from .twist import Family, TwistRule

__all__ = ["main", "merge_partials"]

_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A config document failed schema validation."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return obj[key]


def _parse_rule(obj: dict, path: str) -> TwistRule:
    _reject_unknown(obj, {"family", "lambda"}, path)
    try:
        return TwistRule.from_dict(obj)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_sim(obj: dict, path: str) -> SimParams:
    _reject_unknown(
        obj, {"n_disks", "diameter", "family", "lambda", "max_events", "seed"}, path
    )
    rule = _parse_rule(
        {"family": _require(obj, "family", path), "lambda": obj.get("lambda", 0.0)}, path
    )
    try:
        return SimParams(
            n_disks=int(_require(obj, "n_disks", path)),
            diameter=float(_require(obj, "diameter", path)),
            rule=rule,
            max_events=int(obj.get("max_events", 10_000_000)),
            seed=int(obj.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_trap(obj: dict, path: str) -> TrapSpec:
    _reject_unknown(obj, {"kind", "eps0", "tol_momentum", "tol_center"}, path)
    try:
        return TrapSpec.from_dict(obj)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_scan_config(doc: dict) -> tuple[EscapeScanConfig, Optional[str]]:
    """Validate and build an escape-scan config from a parsed JSON document."""
    _reject_unknown(doc, {"escape_scan", "output"}, "$")
    body = _require(doc, "escape_scan", "$")
    path = "$.escape_scan"
    _reject_unknown(
        body,
        {"lambda_grid", "samples_per_lambda", "trap", "sim", "workers", "master_seed"},
        path,
    )
    sim = _parse_sim(_require(body, "sim", path), path + ".sim")
    trap = _parse_trap(_require(body, "trap", path), path + ".trap")
    try:
        cfg = EscapeScanConfig(
            lambda_grid=tuple(float(x) for x in _require(body, "lambda_grid", path)),
            samples_per_lambda=int(_require(body, "samples_per_lambda", path)),
            trap=trap,
            sim=sim,
            workers=int(body.get("workers", _default_workers())),
            master_seed=int(body.get("master_seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg, doc.get("output")


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("TWISTCHANNEL_WORKERS", "1")))
    except ValueError:
        return 1


def write_scan_csv(stats, out) -> None:
    w = csv.writer(out)
    w.writerow(
        ["lambda", "mean_tau", "stderr", "censored", "n_samples", "anomalies", "ks_exponential"]
    )
    for s in stats:
        w.writerow(
            [
                _fmt(s.lam),
                _fmt(s.mean_tau),
                _fmt(s.stderr),
                s.censored_count,
                s.n_samples,
                s.anomaly_count,
                _fmt(s.ks_exponential),
            ]
        )


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _family_from_name(name: str) -> Family:
    table = {
        "specular": Family.SPECULAR,
        "tan_center": Family.TAN_CENTER,
        "reversible_shear": Family.REVERSIBLE_SHEAR,
    }
    if name not in table:
        raise ConfigError(f"unknown family {name!r}")
    return table[name]


def _cmd_simulate(args) -> int:
    rule = TwistRule(_family_from_name(args.family), args.lam)
    params = SimParams(
        n_disks=args.n, diameter=args.d, rule=rule, max_events=args.events, seed=args.seed
    )
    rng = trajectory_rng(args.seed, 0, 0)
    state = sample_initial_state(params, rng)
    from .core import kinetic_energy, horizontal_momentum

    ke0 = kinetic_energy(state)
    mu0 = horizontal_momentum(state)
    out, close = _open_out(args.out)
    try:
        w = csv.writer(out)
        w.writerow(
            [
                "n", "t", "kind", "i", "jk",
                "ui_pre", "vi_pre", "ui_post", "vi_post",
                "uj_pre", "vj_pre", "uj_post", "vj_post",
                "phi", "psi",
            ]
        )
        prev = state
        done = 0
        for outcome in event_stream(state, rule, args.events):
            if outcome.frozen:
                break
            ev = outcome.event
            after = outcome.state_after
            i = ev.i
            if ev.kind == "wall":
                row = [
                    after.collisions, _fmt(ev.time), "wall", i, ev.wall,
                    _fmt(prev.velocities[i, 0]), _fmt(prev.velocities[i, 1]),
                    _fmt(after.velocities[i, 0]), _fmt(after.velocities[i, 1]),
                    "", "", "", "",
                    _fmt(outcome.wall_angle_in), _fmt(outcome.wall_angle_out),
                ]
            else:
                j = ev.j
                row = [
                    after.collisions, _fmt(ev.time), "pair", i, j,
                    _fmt(prev.velocities[i, 0]), _fmt(prev.velocities[i, 1]),
                    _fmt(after.velocities[i, 0]), _fmt(after.velocities[i, 1]),
                    _fmt(prev.velocities[j, 0]), _fmt(prev.velocities[j, 1]),
                    _fmt(after.velocities[j, 0]), _fmt(after.velocities[j, 1]),
                    "", "",
                ]
            w.writerow(row)
            prev = after
            done += 1
        ke1 = kinetic_energy(prev)
        mu1_ = horizontal_momentum(prev)
        print(
            f"events={done} time={_fmt(prev.time)} "
            f"energy_drift={_fmt(abs(ke1 - ke0))} momentum_drift={_fmt(abs(mu1_ - mu0))}",
            file=sys.stderr,
        )
    finally:
        if close:
            out.close()
    return 0


def _cmd_escape_scan(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    cfg, output = load_scan_config(doc)
    if args.out is not None:
        output = args.out
    if args.workers is not None:
        cfg = EscapeScanConfig(
            lambda_grid=cfg.lambda_grid,
            samples_per_lambda=cfg.samples_per_lambda,
            trap=cfg.trap,
            sim=cfg.sim,
            workers=args.workers,
            master_seed=cfg.master_seed,
        )
    stats = escape_scan(cfg)
    out, close = _open_out(output)
    try:
        write_scan_csv(stats, out)
    finally:
        if close:
            out.close()
    if args.fit:
        fit = fit_scaling(stats, args.fit)
        report = {
            "schema_version": _SCHEMA_VERSION,
            "model": fit.model,
            "a": fit.a,
            "b": fit.b,
            "c": fit.c,
            "rms_residual": fit.rms_residual,
        }
        print(json.dumps(report, indent=2))
    return 0


def _cmd_drift(args) -> int:
    rule = TwistRule(Family.TAN_CENTER, args.lam)
    params = SimParams(
        n_disks=args.n, diameter=args.d, rule=rule, max_events=args.events_per_sample,
        seed=args.seed,
    )
    curve = drift_curve(
        params, args.samples, args.events_per_sample, n_bins=args.bins, workers=args.workers
    )
    out, close = _open_out(args.out)
    try:
        w = csv.writer(out)
        w.writerow(["bin_center", "mean_du", "count"])
        mean = curve.mean_du
        for c, m, k in zip(curve.centers, mean, curve.counts):
            w.writerow([_fmt(c), _fmt(m) if math.isfinite(m) else "", int(k)])
    finally:
        if close:
            out.close()
    return 0


def _cmd_sstar_decay(args) -> int:
    rule = TwistRule(Family.REVERSIBLE_SHEAR, args.lam)
    params = SimParams(n_disks=2, diameter=args.d, rule=rule, seed=args.seed)
    result = sstar_decay(params, args.perturbation, args.pairs)
    out, close = _open_out(args.out)
    try:
        w = csv.writer(out)
        w.writerow(["collision_index", "m", "log_dv", "log_ell"])
        for idx in range(result.dv.size):
            log_dv = math.log(result.dv[idx]) if result.dv[idx] > 0.0 else -math.inf
            log_ell = math.log(result.ell[idx]) if result.ell[idx] > 0.0 else -math.inf
            w.writerow([idx, int(result.m[idx]), _fmt(log_dv), _fmt(log_ell)])
    finally:
        if close:
            out.close()
    summary = {
        "schema_version": _SCHEMA_VERSION,
        "exact": result.exact,
        "slope_dv": result.slope_dv,
        "slope_ell": result.slope_ell,
        "n_odd": result.n_odd,
        "n_even": result.n_even,
        "n_mixed": result.n_mixed,
        "events": result.events,
    }
    print(json.dumps(summary, indent=2), file=sys.stderr)
    return 0


def _cmd_map_analyze(args) -> int:
    rule = TwistRule(_family_from_name(args.family), args.lam)
    report = analyze(rule, grid_size=args.grid)
    doc = {"schema_version": _SCHEMA_VERSION, **report.to_dict()}
    out, close = _open_out(args.out)
    try:
        json.dump(doc, out, indent=2)
        out.write("\n")
    finally:
        if close:
            out.close()
    return 0


def _cmd_lemmas(args) -> int:
    rule = TwistRule(_family_from_name(args.family), args.lam)
    walls = []
    for k in (0, 1):
        res = lemma_report(rule, k)
        walls.append(
            {
                "k": k,
                "mu1": res.mu1,
                "mu1_error": res.mu1_error,
                "mu2": res.mu2,
                "mu2_error": res.mu2_error,
            }
        )
    doc = {
        "schema_version": _SCHEMA_VERSION,
        "family": args.family,
        "lambda": args.lam,
        "walls": walls,
    }
    if rule.family == Family.REVERSIBLE_SHEAR:
        t = np.linspace(0.0, 1.0, args.t_points)
        doc["f_curve"] = {"t": list(t), "F": [float(v) for v in f_curve(rule, 0, t)]}
    out, close = _open_out(args.out)
    try:
        json.dump(doc, out, indent=2)
        out.write("\n")
    finally:
        if close:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twistchannel")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one trajectory and emit an event log")
    s.add_argument("--family", default="specular")
    s.add_argument("--lam", type=float, default=0.0)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--d", type=float, default=0.1)
    s.add_argument("--events", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("escape-scan", help="mean escape time over a lambda grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--fit", choices=["linear", "loglog_refined"], default=None)
    s.set_defaults(func=_cmd_escape_scan)

    s = sub.add_parser("drift", help="average wall change of u binned by u")
    s.add_argument("--lam", type=float, required=True)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--d", type=float, default=0.1)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--events-per-sample", type=int, default=2000)
    s.add_argument("--bins", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=_default_workers())
    s.add_argument("--out", default="-")
    s.set_defaults(func=_cmd_drift)

    s = sub.add_parser("sstar-decay", help="perturbation decay of the symmetric regime")
    s.add_argument("--lam", type=float, required=True)
    s.add_argument("--d", type=float, default=0.1)
    s.add_argument("--perturbation", type=float, default=1e-3)
    s.add_argument("--pairs", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=_cmd_sstar_decay)

    s = sub.add_parser("map-analyze", help="fixed points and structure of the angle map")
    s.add_argument("--family", required=True)
    s.add_argument("--lam", type=float, default=0.0)
    s.add_argument("--grid", type=int, default=4096)
    s.add_argument("--out", default="-")
    s.set_defaults(func=_cmd_map_analyze)

    s = sub.add_parser("lemmas", help="decay integrals mu1, mu2 and the F curve")
    s.add_argument("--family", required=True)
    s.add_argument("--lam", type=float, required=True)
    s.add_argument("--t-points", type=int, default=11)
    s.add_argument("--out", default="-")
    s.set_defaults(func=_cmd_lemmas)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
