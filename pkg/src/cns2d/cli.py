"""Command-line driver: run, sweep-nu, picard, invariants, compare-forms."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as cio
from .diagnostics import run_invariant_suite
from .integrate import CFLViolation, ConstraintDrift, IntegrationAbort, IntegratorConfig, integrate
from .picard import (
    PicardConfig,
    PicardNonConvergence,
    PicardPath,
    estimate_embedding_constants,
    picard_iterate,
    select_T0,
    sup_l2_distance,
    truncation_level,
)
from .spectral import l2_norm, set_fft_workers, sobolev_norms
from .vorticity import cross_check_forms

EXIT_OK, EXIT_FAIL, EXIT_CFL, EXIT_BLOWUP, EXIT_DRIFT, EXIT_CONFIG = 0, 1, 2, 3, 4, 5
# sweep errors at or below this count as zero (unit-norm data, accumulated roundoff)
SWEEP_ZERO = 1e-12


def _threads(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("CNS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise cio.ConfigError(f"CNS_THREADS must be an integer, got {env!r}") from None
    return 1


def _apply_overrides(cfg: cio.RunConfig, args) -> cio.RunConfig:
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise cio.ConfigError("--seed must be an unsigned 64-bit integer")
        ic = cfg.initial_condition
        if ic.kind == "random":
            cfg = replace(cfg, initial_condition=replace(ic, seed=args.seed))
    return cfg


def _outdir(cfg) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _abort_code(exc: IntegrationAbort) -> int:
    if isinstance(exc, CFLViolation):
        return EXIT_CFL
    if isinstance(exc, ConstraintDrift):
        return EXIT_DRIFT
    return EXIT_BLOWUP


def _write_run(out: Path, traj, nu) -> None:
    cio.write_diagnostics(out / "diagnostics.csv", traj.rows)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for i, (t, u) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        cio.write_snapshot(snaps / f"snap_{i:06d}.cns2", u, nu, float(t))
    if traj.snapshots:
        cio.write_snapshot(out / "final.cns2", traj.snapshots[-1], nu, float(traj.snapshot_times[-1]))


# --------------------------------------------------------------------- run


def cmd_run(cfg: cio.RunConfig, threads: int) -> int:
    set_fft_workers(threads)
    out = _outdir(cfg)
    u0 = cfg.initial_field()
    try:
        traj = integrate(u0, cfg.integrator(), cfg.nu)
    except IntegrationAbort as exc:
        if exc.trajectory is not None and len(exc.trajectory.rows):
            _write_run(out, exc.trajectory, cfg.nu)
        print(f"run aborted: {exc}", file=sys.stderr)
        return _abort_code(exc)
    _write_run(out, traj, cfg.nu)
    v = traj.column("v_norm")
    summary = {
        "steps": len(traj.rows) - 1,
        "final_time": float(traj.times[-1]),
        "max_constraint_residual": float(np.abs(traj.column("constraint_residual")).max()),
        "v_norm_initial": float(v[0]),
        "v_norm_final": float(v[-1]),
        "v_norm_monotone": bool(np.all(np.diff(v) <= 1e-12 * max(1.0, v[0]))),
    }
    _dump(out / "run.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- sweep-nu


def _sweep_row(args):
    cfg, nu, row_dir = args
    set_fft_workers(1)
    row_dir = Path(row_dir)
    row_dir.mkdir(parents=True, exist_ok=True)
    u0 = cfg.initial_field()
    traj = integrate(u0, cfg.integrator(renormalize="monitor_only"), nu)
    _write_run(row_dir, traj, nu)
    return nu, sorted(str(p) for p in (row_dir / "snapshots").glob("snap_*.cns2"))


def sweep_errors(cfg: cio.RunConfig, threads: int = 1):
    """E(nu) = sup_t |u^nu(t) - u^0(t)|_L2 against the Euler run on the same grid and dt."""
    out = _outdir(cfg)
    jobs = [(cfg, 0.0, str(out / "nu_0"))] + [(cfg, nu, str(out / f"nu_{nu!r}")) for nu in cfg.nu_list]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    ref = [cio.read_snapshot(p).field for p in results[0][1]]
    table = []
    for nu, paths in results[1:]:
        err = 0.0
        for p, r in zip(paths, ref):
            err = max(err, l2_norm(cio.read_snapshot(p).field - r))
        table.append((nu, err))
    return table


def loglog_slope(table) -> float:
    pts = [(math.log(nu), math.log(e)) for nu, e in table if e > 0]
    if len(pts) < 2:
        return float("nan")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def cmd_sweep(cfg: cio.RunConfig, threads: int) -> int:
    out = _outdir(cfg)
    try:
        table = sweep_errors(cfg, threads)
    except IntegrationAbort as exc:
        print(f"sweep aborted: {exc}", file=sys.stderr)
        return _abort_code(exc)
    errs = [e for _, e in table]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    all_zero = all(e <= SWEEP_ZERO for e in errs)
    slope = loglog_slope(table)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("nu,E\n")
        for nu, e in table:
            fh.write(f"{nu!r},{e!r}\n")
    _dump(out / "sweep.json", {"table": [[nu, e] for nu, e in table], "strictly_decreasing": decreasing,
                               "zero_to_roundoff": all_zero, "loglog_slope": slope})
    print(f"{'nu':>12} {'E(nu)':>14}")
    for nu, e in table:
        print(f"{nu:12.6g} {e:14.6e}")
    print(f"least-squares slope of log E vs log nu: {slope:.4f} (descriptive only)")
    if all_zero:
        print(f"E identically zero to roundoff (<= {SWEEP_ZERO:g}): stationary initial data")
    else:
        print("E strictly decreasing along the ladder" if decreasing else "E NOT strictly decreasing")
    return EXIT_OK if decreasing or all_zero else EXIT_FAIL


# ------------------------------------------------------------------ picard


def picard_report(cfg: cio.RunConfig, seed: int = 0) -> dict:
    grid = cfg.grid
    u0 = cfg.initial_field(normalize=cfg.initial_condition.kind != "zero")
    consts = estimate_embedding_constants(grid, cfg.embedding_samples, seed=seed)
    R = sobolev_norms(u0).v
    n_trunc = truncation_level(R, consts.C2, cfg.epsilon)
    T0 = select_T0(n_trunc, cfg.epsilon, consts.C1)
    T = T0 / 2
    pcfg = PicardConfig(n_trunc, T, cfg.epsilon, cfg.max_iters, cfg.quad_nodes)
    res = picard_iterate(u0, pcfg)
    if sobolev_norms(u0).h == 0:
        agreement = sup_l2_distance(res.path, PicardPath.zeros(grid, pcfg.times))
    else:
        dt = T / (pcfg.quad_nodes - 1)
        traj = integrate(u0, IntegratorConfig(dt, T, renormalize="off", check_cfl=False), 1.0)
        ip = PicardPath(grid, pcfg.times, np.stack([s.coeffs for s in traj.snapshots]))
        agreement = sup_l2_distance(ip, res.path)
    return {
        "C1": consts.C1, "C2": consts.C2, "C1_witness": consts.C1_witness, "C2_witness": consts.C2_witness,
        "R": R, "truncation_level": n_trunc, "T0": T0, "T": T, "epsilon": cfg.epsilon,
        "iterations": res.iterations, "history": res.history, "ratios": res.ratios,
        "observed_ratio": res.observed_ratio, "converged": res.converged, "tau_n": res.tau_n,
        "agreement_sup_l2": agreement,
    }


def cmd_picard(cfg: cio.RunConfig, threads: int) -> int:
    set_fft_workers(threads)
    out = _outdir(cfg)
    try:
        rep = picard_report(cfg)
    except PicardNonConvergence as exc:
        _dump(out / "picard.json", {"converged": False, "history": exc.history})
        print(f"picard: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _dump(out / "picard.json", rep)
    with open(out / "picard_history.csv", "w") as fh:
        fh.write("iteration,xt_distance\n")
        for i, d in enumerate(rep["history"], 1):
            fh.write(f"{i},{d!r}\n")
    ok = rep["observed_ratio"] <= cfg.epsilon + 0.05 and rep["agreement_sup_l2"] <= 1e-6
    for k in ("C1", "C2", "truncation_level", "T0", "T", "iterations", "observed_ratio", "agreement_sup_l2"):
        print(f"{k:>18}: {rep[k]}")
    return EXIT_OK if ok else EXIT_FAIL


# -------------------------------------------------------------- invariants


def cmd_invariants(cfg: cio.RunConfig, threads: int, no_dealias: bool = False) -> int:
    set_fft_workers(threads)
    out = _outdir(cfg)
    frac = 1.0 if no_dealias else cfg.dealias_fraction
    seed = cfg.initial_condition.seed if cfg.initial_condition.kind == "random" else 0
    reports = run_invariant_suite(cfg.n, frac, seed=seed, samples=cfg.samples)
    _dump(out / "invariants.json", [r.as_dict() for r in reports])
    width = max(len(r.name) for r in reports)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  margin {r.margin: .3e}  {r.witness}")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ----------------------------------------------------------- compare-forms


def cmd_compare(cfg: cio.RunConfig, threads: int) -> int:
    set_fft_workers(threads)
    out = _outdir(cfg)
    u0 = cfg.initial_field()
    try:
        d1 = cross_check_forms(u0, cfg.integrator(), cfg.nu)
        d2 = cross_check_forms(u0, cfg.integrator(dt=cfg.dt / 2), cfg.nu)
    except IntegrationAbort as exc:
        print(f"compare-forms aborted: {exc}", file=sys.stderr)
        return _abort_code(exc)
    ratio = d1 / d2 if d2 > 0 else float("inf")
    rep = {"dt": cfg.dt, "discrepancy": d1, "discrepancy_half_dt": d2, "ratio": ratio}
    _dump(out / "compare_forms.json", rep)
    print(json.dumps(rep, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cns2d", description="Constrained 2-D Navier-Stokes on the torus")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("run", "integrate one trajectory"),
                           ("sweep-nu", "vanishing-viscosity ladder against the Euler run"),
                           ("picard", "contraction and fixed-point check of the mild formulation"),
                           ("invariants", "run the invariant check suite"),
                           ("compare-forms", "velocity vs vorticity form discrepancy")]:
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, metavar="PATH", help="JSON configuration file")
        s.add_argument("--output", metavar="DIR", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, metavar="U64", help="seed for a random initial condition")
        s.add_argument("--threads", type=int, metavar="N", help="worker threads (default: $CNS_THREADS or 1)")
        if name == "invariants":
            s.add_argument("--no-dealias", action="store_true", help="disable dealiasing (negative control)")
    return p


_REQUIRED = {"run": cio.REQUIRED_RUN, "compare-forms": cio.REQUIRED_RUN,
             "sweep-nu": ("n", "dt", "horizon"), "picard": (), "invariants": ()}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cio.parse_config(args.config, _REQUIRED[args.command])
        cfg = _apply_overrides(cfg, args)
        threads = _threads(args.threads)
    except (cio.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(cfg, threads)
        if args.command == "sweep-nu":
            return cmd_sweep(cfg, threads)
        if args.command == "picard":
            return cmd_picard(cfg, threads)
        if args.command == "invariants":
            return cmd_invariants(cfg, threads, args.no_dealias)
        return cmd_compare(cfg, threads)
    except (cio.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
