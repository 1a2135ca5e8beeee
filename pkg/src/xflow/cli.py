"""Command line interface.

Subcommands: run, report, viscosity-study, incompressible-study,
validate, emit-config.  Exit codes: 0 success, 2 configuration error,
3 numerical abort, 4 I/O error.

Environment: XFLOW_OUT_ROOT prefixes relative output directories;
XFLOW_THREADS caps the BLAS/OpenMP thread count (set before numpy loads).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _apply_thread_env():
    threads = os.environ.get("XFLOW_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _out_dir(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get("XFLOW_OUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_float_list(raw: str):
    return [float(x) for x in raw.split(",") if x.strip()]


def _parse_int_list(raw: str):
    return [int(x) for x in raw.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# commands


def _cmd_run(args) -> int:
    from .configio import emit_config, parse_config_file
    from .diagnostics import ledger_to_csv
    from .snapshots import save_snapshot, write_manifest, _utc_now
    from .solver import NumericalAbort, run

    cfg = parse_config_file(args.config)
    out = _out_dir(args.out)
    config_text = emit_config(cfg)
    (out / "config.ini").write_text(config_text, encoding="utf-8")
    started = _utc_now()

    def persist(traj, abort_reason=None):
        index = []
        for k, snap in enumerate(traj.snapshots):
            files = {}
            for name in ("rho1", "rho2", "n"):
                fname = f"snap_{k:06d}_{name}.xflw"
                save_snapshot(out / fname, cfg.grid, snap["t"], snap[name])
                files[name] = fname
            index.append({"t": snap["t"], "files": files})
        ledger_to_csv(traj.ledger, out / "ledger.csv")
        write_manifest(out, config_text, index, started=started,
                       abort_reason=abort_reason)

    try:
        traj = run(cfg)
    except NumericalAbort as exc:
        if exc.trajectory is not None:
            persist(exc.trajectory, abort_reason=str(exc))
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    persist(traj)
    print(f"run complete: t_end={cfg.t_end:g}, {len(traj.ledger) - 1} steps, "
          f"{len(traj.snapshots)} snapshots -> {out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    import numpy as np

    from .configio import parse_config_file
    from .diagnostics import (RunConstants, beta_link_check,
                              dissipation_balance, duality_residual,
                              estimate_monitors, ledger_from_csv)
    from .energy import beta as energy_beta
    from .plotting import ledger_figure, monitor_figure, profile_figure
    from .snapshots import load_manifest, load_snapshot
    from .solver import SimState, derived_fields

    traj_dir = Path(args.traj)
    manifest = load_manifest(traj_dir)
    cfg = parse_config_file(traj_dir / "config.ini")
    ledger = ledger_from_csv(traj_dir / "ledger.csv")
    consts = RunConstants(d=cfg.grid.d, L=cfg.grid.L, h=cfg.grid.h,
                          gamma=cfg.gamma, div_v_sup=cfg.V.div_sup(cfg.grid),
                          beta=energy_beta(cfg.energy))
    T = args.T if args.T is not None else ledger.final_time()

    lines = []
    balance = dissipation_balance(ledger, T, consts)
    lines.append(str(balance))
    monitors = estimate_monitors(ledger, consts, T)
    lines.extend(str(m) for m in monitors)

    worst_residual = 0.0
    worst_beta_gap = 0.0
    last = None
    bval = consts.beta
    for entry in manifest["snapshots"]:
        arrays = {name: load_snapshot(traj_dir / fname)[2]
                  for name, fname in entry["files"].items()}
        state = SimState(entry["t"], arrays["rho1"], arrays["rho2"], arrays["n"])
        der = derived_fields(cfg, state)
        worst_residual = max(worst_residual,
                             duality_residual(cfg.energy, der.rho, der.q))
        _, gap = beta_link_check(cfg.energy, der.q, bval)
        worst_beta_gap = max(worst_beta_gap, gap)
        last = (entry, arrays, der)
    res_tol = 1e-10 if cfg.energy.family in ("power", "entropy") else 1e-4
    res_pass = "PASS" if worst_residual <= res_tol else "FAIL"
    lines.append(f"duality residual        [exact  ] max={worst_residual:.3e} "
                 f"(tol {res_tol:g}) {res_pass}")
    bl_pass = "PASS" if worst_beta_gap <= 1e-12 else "FAIL"
    lines.append(f"beta link               [exact  ] worst={worst_beta_gap:.3e} {bl_pass}")

    report = "\n".join(lines) + "\n"
    print(report, end="")
    (traj_dir / "report.txt").write_text(report, encoding="utf-8")

    with open(traj_dir / "monitors.csv", "w", encoding="utf-8") as fh:
        fh.write("name,kind,lhs,rhs,ratio,passed\n")
        fh.write(f"balance,balance,{balance.balance!r},{balance.scale!r},"
                 f"{balance.relative!r},{balance.passed}\n")
        for m in monitors:
            fh.write(f"{m.name},{m.kind},{m.lhs!r},{m.rhs!r},{m.ratio!r},{m.passed}\n")

    figdir = traj_dir / "figures"
    ledger_figure(ledger, figdir / "ledger.png")
    monitor_figure(monitors, figdir / "monitors.png")
    if last is not None:
        entry, arrays, der = last
        snap = dict(arrays)
        snap["t"] = entry["t"]
        profile_figure(cfg.grid, snap, der, figdir / "final_profile.png")
    all_pass = balance.passed and all(m.passed for m in monitors) \
        and worst_residual <= res_tol and worst_beta_gap <= 1e-12
    return EXIT_OK if all_pass else EXIT_NUMERIC


def _emit_study(table, out: Path, stem: str):
    from .plotting import study_figure
    from .studies import write_csv, write_plot_data

    write_csv(table, out / f"{stem}.csv")
    write_plot_data(table, out / f"{stem}.dat")
    study_figure(table, out / f"{stem}.png")
    print(f"{stem}: {len(table)} rows -> {out}")


def _cmd_viscosity_study(args) -> int:
    from .configio import parse_config_file
    from .studies import gamma_balance_grid, vanishing_viscosity_study

    cfg = parse_config_file(args.config)
    T = args.T if args.T is not None else cfg.t_end
    out = _out_dir(args.out)
    gammas = _parse_float_list(args.gammas)
    table = vanishing_viscosity_study(cfg, gammas, T)
    _emit_study(table, out, "viscosity_study")
    balances = gamma_balance_grid(cfg, sorted(set(gammas + [0.0])), T)
    _emit_study(balances, out, "gamma_balance")
    return EXIT_OK


def _cmd_incompressible_study(args) -> int:
    from .configio import parse_config_file
    from .studies import incompressible_limit_study

    cfg = parse_config_file(args.config)
    T = args.T if args.T is not None else cfg.t_end
    out = _out_dir(args.out)
    table = incompressible_limit_study(cfg, _parse_float_list(args.exponents), T)
    _emit_study(table, out, "incompressible_study")
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.what != "barenblatt":
        print(f"unknown validation target {args.what!r}", file=sys.stderr)
        return EXIT_CONFIG
    from .studies import barenblatt_validation

    out = _out_dir(args.out)
    table = barenblatt_validation(m=args.m, N_list=_parse_int_list(args.grids),
                                  t0=args.t0, T=args.T, mass=args.mass, L=args.L)
    _emit_study(table, out, "barenblatt_validation")
    worst = max(table.column("l1_error"))
    print(f"worst L1 error: {worst:.4%} of mass")
    return EXIT_OK


def _cmd_emit_config(args) -> int:
    from .configio import PRESETS

    if args.preset not in PRESETS:
        print(f"unknown preset {args.preset!r}; available: "
              f"{', '.join(sorted(PRESETS))}", file=sys.stderr)
        return EXIT_CONFIG
    text = PRESETS[args.preset]
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xflow",
        description="Finite-volume solver and audits for two-species "
                    "cross-diffusion growth models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation and persist the trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="audit a stored trajectory (PASS/FAIL table)")
    p.add_argument("--traj", required=True)
    p.add_argument("--T", type=float, default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("viscosity-study", help="vanishing-viscosity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--gammas", required=True,
                   help="descending list, e.g. 1e-1,1e-2,1e-3,1e-4")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_viscosity_study)

    p = sub.add_parser("incompressible-study", help="m -> infinity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--exponents", required=True, help="ascending, e.g. 2,4,8,16,32,64")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_incompressible_study)

    p = sub.add_parser("validate", help="oracle validations")
    p.add_argument("what", choices=["barenblatt"])
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--grids", default="128,256,512")
    p.add_argument("--t0", type=float, default=0.1)
    p.add_argument("--T", type=float, default=0.6)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--out", default="barenblatt_out")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("emit-config", help="print a documented configuration")
    p.add_argument("--preset", default="default")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_emit_config)

    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"file not found: {err}", file=sys.stderr)
        return EXIT_IO
    except PermissionError as err:
        print(f"permission denied: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        # ConfigError, SnapshotError, and study preconditions land here
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
