"""Command line entry points: solve, particles, sweep, compare.

Every run directory receives the fully resolved configuration
(config_resolved.cfg), diagnostics.csv and any requested snapshots;
re-running the echoed configuration reproduces diagnostics.csv
byte-for-byte.  The SMOLVEL_NUM_THREADS environment variable, or the
--deterministic flag (which forces one thread), is exported to the BLAS
thread-count variables before any numerical module loads.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

_CONFIG_ECHO = "config_resolved.cfg"
_DIAGNOSTICS = "diagnostics.csv"


def _export_thread_env(deterministic: bool) -> None:
    count = "1" if deterministic else os.environ.get("SMOLVEL_NUM_THREADS")
    if count is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, count)


def _load_config(path: str, out_dir: str | None, deterministic: bool):
    from .config import ConfigError, parse_config, with_overrides

    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except (OSError, ConfigError) as exc:
        raise SystemExit(f"error: {path}: {exc}")
    if out_dir is not None:
        cfg = with_overrides(cfg, out_dir=out_dir)
    if deterministic:
        from dataclasses import replace

        cfg = replace(cfg, deterministic=True)
    return cfg


def _write_run(cfg, result, source: str) -> str:
    from .config import format_config
    from .io import snapshot_filename, write_diagnostics_csv, write_snapshot, _write_text

    out_dir = cfg.output.out_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_text(os.path.join(out_dir, _CONFIG_ECHO), format_config(cfg))
    write_diagnostics_csv(os.path.join(out_dir, _DIAGNOSTICS), result.rows,
                          cfg.params.M, cfg.params.d)
    from .params import build_grid

    grid = build_grid(cfg.params)
    for t, m, field in result.snapshots:
        write_snapshot(os.path.join(out_dir, snapshot_filename(source, t, m)),
                       grid, field)
    return out_dir


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config, args.out_dir, args.deterministic)
    from .config import initial_density_set
    from .integrator import run
    from .params import build_grid

    grid = build_grid(cfg.params)
    initial = initial_density_set(cfg.init, cfg.params, grid)
    result = run(cfg.params, initial,
                 output_every=cfg.output.output_every,
                 snapshot_times=cfg.output.snapshot_times)
    out_dir = _write_run(cfg, result, "pde")
    last = result.rows[-1]
    print(f"solve: t={last.t:g} T={last.T:.6g} "
          f"expelled={last.expelled_cumulative:.6g} -> {out_dir}")
    return 0


def _cmd_particles(args) -> int:
    cfg = _load_config(args.config, args.out_dir, args.deterministic)
    from .params import build_grid
    from .particles import run_particles

    grid = build_grid(cfg.params)
    result = run_particles(cfg.params, cfg.init, cfg.particles, grid,
                           output_every=cfg.output.output_every,
                           snapshot_times=cfg.output.snapshot_times)
    out_dir = _write_run(cfg, result, "particles")
    last = result.rows[-1]
    print(f"particles: t={last.t:g} T={last.T:.6g} "
          f"expelled={last.expelled_cumulative:.6g} -> {out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    try:
        kappas = [float(v) for v in args.kappa.split(",") if v.strip()]
    except ValueError:
        raise SystemExit(f"error: bad --kappa list {args.kappa!r}")
    if not kappas:
        raise SystemExit("error: --kappa list is empty")
    if any(k <= 0 for k in kappas):
        raise SystemExit("error: kappa values must be > 0")
    cfg = _load_config(args.config, args.out_dir, args.deterministic)
    from .config import initial_density_set, with_overrides
    from .integrator import run
    from .io import write_summary_csv
    from .params import build_grid

    base_dir = cfg.output.out_dir
    entries = []
    for kappa in kappas:
        sub = with_overrides(cfg, kappa=kappa,
                             out_dir=os.path.join(base_dir, f"kappa_{kappa:g}"))
        grid = build_grid(sub.params)
        initial = initial_density_set(sub.init, sub.params, grid)
        result = run(sub.params, initial,
                     output_every=sub.output.output_every,
                     snapshot_times=sub.output.snapshot_times)
        _write_run(sub, result, "pde")
        last = result.rows[-1]
        entries.append((kappa, last.expelled_cumulative, last.T))
        print(f"sweep kappa={kappa:g}: T_final={last.T:.6g} "
              f"expelled={last.expelled_cumulative:.6g}")
    write_summary_csv(os.path.join(base_dir, "summary.csv"), entries)
    return 0


def compare_runs(pde_dir: str, particle_dir: str):
    """Compute the comparison report rows; raises on config mismatch."""
    import numpy as np

    from .config import parse_config
    from .io import read_diagnostics_csv, read_snapshot, snapshot_filename

    cfgs = []
    for run_dir in (pde_dir, particle_dir):
        path = os.path.join(run_dir, _CONFIG_ECHO)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                cfgs.append(parse_config(fh.read()))
        except OSError as exc:
            raise ValueError(f"cannot read {path}: {exc}") from None
    a, b = cfgs
    if (a.params.d, a.params.M) != (b.params.d, b.params.M):
        raise ValueError("config mismatch: d or M differ")
    if a.init != b.init:
        raise ValueError("config mismatch: initial data differ")
    if (a.params.V, a.params.G) != (b.params.V, b.params.G):
        raise ValueError("config mismatch: velocity grids differ")
    if not math.isclose(b.params.kappa, b.particles.mu):
        raise ValueError("config mismatch: particle run needs mu = kappa")
    if b.particles.common_noise:
        raise ValueError("config mismatch: common noise breaks the kinetic limit")
    N = b.particles.N
    # both diagnostics files must parse against the shared schema
    for run_dir in (pde_dir, particle_dir):
        read_diagnostics_csv(os.path.join(run_dir, _DIAGNOSTICS))
    M, d = a.params.M, a.params.d

    def find_snapshot(run_dir: str, prefer: str, t: float, m: int) -> str:
        other = "pde" if prefer == "particles" else "particles"
        for source in (prefer, other):
            path = os.path.join(run_dir, snapshot_filename(source, t, m))
            if os.path.exists(path):
                return path
        raise ValueError(f"missing snapshot t={t:g} m={m} in {run_dir}")

    entries = []
    times = sorted(set(a.output.snapshot_times) & set(b.output.snapshot_times))
    hd = (2.0 * a.params.V / a.params.G) ** d
    for t in times:
        for m in range(1, M + 1):
            _, f_pde = read_snapshot(find_snapshot(pde_dir, "pde", t, m))
            _, f_emp = read_snapshot(
                find_snapshot(particle_dir, "particles", t, m))
            l1 = float(np.abs(f_pde - f_emp).sum() * hd)
            p_cells = np.clip(f_pde * hd, 0.0, 1.0)
            bound = 4.0 * math.sqrt(2.0 / math.pi) * float(
                np.sqrt(p_cells * (1.0 - p_cells) / N).sum())
            mass_pde = float(f_pde.sum() * hd)
            mass_emp = float(f_emp.sum() * hd)
            p = min(max(mass_pde, 0.0), 1.0)
            se = math.sqrt(p * (1.0 - p) / N)
            entries.append((t, m, l1, mass_pde, mass_emp, se, bound))
    return entries


def _cmd_compare(args) -> int:
    from .io import write_report_csv

    try:
        entries = compare_runs(args.pde_dir, args.particle_dir)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    write_report_csv(args.out, entries)
    for t, m, l1, mp, me, se, bound in entries:
        print(f"t={t:g} m={m}: L1={l1:.4g} mass_pde={mp:.6g} "
              f"mass_particles={me:.6g} se={se:.2g}")
    print(f"report -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smolvel",
        description="Velocity-dependent coagulation: kinetic solver and "
                    "Monte Carlo particle twin.",
        epilog="Config format: sectioned key = value text; sections "
               "[model] d,M,alpha,kappa,mu,seed; [grid] V,G; [time] dt,t_end; "
               "[truncation] R; [init] r_<m>, g_<m> (components "
               "'w @ mean.. : var..' joined by '|'); [particles] N,epsilon,"
               "mode,common_noise,dt_p; [output] output_every,snapshot_times,"
               "out_dir.  Defaults: alpha=kappa=1, mu=kappa, V=auto "
               "(8 stationary sigmas, rounded up), G=256, dt=auto, t_end=1, "
               "R=infinite, seed=0, N=10000, epsilon=0.1, mode=meanfield, "
               "dt_p=0.01, output_every=0.1, out_dir=run_out.",
    )
    parser.add_argument("--deterministic", action="store_true",
                        help="force single-threaded BLAS reductions for "
                             "bit-reproducible output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the deterministic solver")
    p_solve.add_argument("config")
    p_solve.add_argument("--out-dir", default=None,
                         help="override [output] out_dir")
    p_solve.set_defaults(func=_cmd_solve)

    p_part = sub.add_parser("particles", help="run the Monte Carlo system")
    p_part.add_argument("config")
    p_part.add_argument("--out-dir", default=None)
    p_part.set_defaults(func=_cmd_particles)

    p_sweep = sub.add_parser("sweep", help="solve once per kappa value")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--kappa", required=True,
                         help="comma-separated kappa list, e.g. 0.1,1,10")
    p_sweep.add_argument("--out-dir", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare",
                           help="PDE vs particle run comparison report")
    p_cmp.add_argument("pde_dir")
    p_cmp.add_argument("particle_dir")
    p_cmp.add_argument("--out", default="report.csv")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _export_thread_env(args.deterministic)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
