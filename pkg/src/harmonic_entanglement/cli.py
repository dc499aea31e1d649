"""Command-line front end (``harment``).

Subcommands
-----------
point      full analysis at one drive, JSON report
angle      inseparability along the constant-power circle, CSV
map        inseparability over seed/pump amplitudes, CSV
synth      synthetic homodyne runs from a correlation matrix
estimate   correlation matrix and inseparability from four runs
fit-gawbs  fit the GAWBS couplings to the published entangled ranges
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import reference
from .config import load_config
from .errors import ModelError
from .gaussian import CorrelationMatrix, standard_form
from .opa import DriveConfig
from .sampling import SETTINGS, estimate_correlation_matrix, read_run, synthesize_runs, write_run
from .sweep import (
    ANGLE_COLUMNS,
    MAP_COLUMNS,
    band_edges,
    fit_gawbs,
    run_angle_sweep,
    run_map,
    run_point,
    sweep_metadata,
    write_table,
)

RUN_FILE_NAMES = {s: f"run_{'p' if s[0] == '+' else 'm'}{'p' if s[1] == '+' else 'm'}.txt" for s in SETTINGS}


def _emit(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _config(args):
    cfg = load_config(args.config)
    sweep = cfg.sweep
    updates = {}
    if getattr(args, "total_mw", None) is not None:
        updates["total_power"] = args.total_mw
    if getattr(args, "grid", None) is not None:
        updates["grid"] = args.grid
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    if getattr(args, "no_gawbs", False):
        updates["gawbs_enabled"] = False
    if getattr(args, "compare", False):
        updates["compare_gawbs"] = True
    if getattr(args, "out", None) is not None:
        updates["output_path"] = args.out
    if updates:
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(sweep, **updates))
    return cfg


def _drive(cfg, args) -> DriveConfig:
    d = cfg.drive
    return DriveConfig(
        seed_power=d.seed_power if args.seed_mw is None else args.seed_mw,
        pump_power=d.pump_power if args.pump_mw is None else args.pump_mw,
        relative_phase=d.relative_phase if args.phase is None else args.phase,
        p_threshold=d.p_threshold,
    )


def cmd_point(args) -> int:
    cfg = _config(args)
    drive = _drive(cfg, args)
    rep = run_point(cfg, drive, gawbs=cfg.sweep.gawbs_enabled)
    out = {"config_sha256": cfg.digest(), "omega_rad_s": cfg.cavity.omega,
           "xi": [cfg.cavity.xi_a, cfg.cavity.xi_b], **rep.as_dict()}
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    if not rep.steady_state.stable:
        print("warning: steady state is unstable", file=sys.stderr)
    return 0


def cmd_angle(args) -> int:
    cfg = _config(args)
    spec = cfg.sweep
    if args.phi is not None:
        spec = dataclasses.replace(spec, angle_range=(args.phi, args.phi), grid=1)
    rows = run_angle_sweep(cfg, spec)
    meta = sweep_metadata(cfg, "angle", total_mw=spec.total_power, grid=spec.grid,
                          angle_range_over_pi=f"{spec.angle_range[0]!r} {spec.angle_range[1]!r}")
    _emit(write_table(None, rows, ANGLE_COLUMNS, meta), args.out)
    return _report_failures(rows)


def cmd_map(args) -> int:
    cfg = _config(args)
    spec = cfg.sweep
    rows = run_map(cfg, spec)
    meta = sweep_metadata(cfg, "map", grid=spec.grid, gawbs=int(spec.gawbs_enabled),
                          axes="amplitudes in units of sqrt(p_threshold), signed pump",
                          map_extent=f"{spec.map_extent[0]!r} {spec.map_extent[1]!r}")
    _emit(write_table(None, rows, MAP_COLUMNS, meta), args.out)
    return _report_failures(rows)


def _report_failures(rows) -> int:
    failed = [r for r in rows if str(r["status"]).startswith("failed")]
    for r in failed:
        print(r["status"], file=sys.stderr)
    if failed:
        print(f"{len(failed)}/{len(rows)} points failed", file=sys.stderr)
    return 0


def _source_matrix(cfg, args) -> CorrelationMatrix:
    if args.matrix is not None:
        return CorrelationMatrix.load(args.matrix)
    if args.published:
        return CorrelationMatrix(reference.MEASURED_CORRELATION)
    return run_point(cfg, _drive(cfg, args), gawbs=cfg.sweep.gawbs_enabled).correlation


def cmd_synth(args) -> int:
    cfg = _config(args)
    m = _source_matrix(cfg, args)
    s = cfg.sampling
    dark_db = s.dark_clearance_db if args.dark_db is None else args.dark_db
    n = s.n_samples if args.samples is None else args.samples
    runs = synthesize_runs(m, n=n, seed=args.rng_seed, v_dark=10 ** (-dark_db / 10),
                           v_excess=(s.excess_a, s.excess_b))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for run in runs:
        write_run(run, os.path.join(out_dir, RUN_FILE_NAMES[run.setting]))
    m.save(os.path.join(out_dir, "source_matrix.txt"))
    print(f"wrote {len(runs)} runs of {n} samples to {out_dir}", file=sys.stderr)
    return 0


def cmd_estimate(args) -> int:
    paths = list(args.runs)
    if len(paths) == 1 and os.path.isdir(paths[0]):
        paths = [os.path.join(paths[0], RUN_FILE_NAMES[s]) for s in SETTINGS]
    est = estimate_correlation_matrix([read_run(p) for p in paths])
    res = standard_form(est)
    text = est.to_text()
    text += f"# inseparability: {res.value!r}\n# k: {res.k!r}\n# r_a: {res.r_a!r}\n# r_b: {res.r_b!r}\n"
    if not res.evaluable:
        text += f"# not evaluable: {res.diagnostic}\n"
    _emit(text, args.out)
    return 0


def cmd_fit_gawbs(args) -> int:
    cfg = _config(args)
    xi, info = fit_gawbs(cfg, total_power=cfg.sweep.total_power)
    edges = " ".join(f"{e:.4f}" for e in info["edges"])
    text = (f"[gawbs]\nxi_a = {xi[0]!r}\nxi_b = {xi[1]!r}\n"
            f"# edges/pi: {edges}\n# I at best-point angle: {info['I_star_angle']:.4f}\n")
    _emit(text, args.out)
    return 0


def cmd_edges(args) -> int:
    cfg = _config(args)
    if not cfg.sweep.gawbs_enabled:
        cfg = cfg.with_gawbs(0.0, 0.0)
    edges = band_edges(cfg, cfg.sweep.total_power)
    _emit(" ".join(repr(e) for e in edges) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harment", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="parameter file overlaid on the defaults")
    common.add_argument("--out", metavar="PATH", help="output file (directory for synth); stdout if omitted")
    common.add_argument("--no-gawbs", action="store_true", help="set the GAWBS couplings to zero")
    drive = argparse.ArgumentParser(add_help=False)
    drive.add_argument("--seed-mw", type=float)
    drive.add_argument("--pump-mw", type=float)
    drive.add_argument("--phase", type=float, help="pump relative phase in radians (0 de-amplifies)")
    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--grid", type=int, metavar="N")
    sweep.add_argument("--workers", type=int, metavar="N")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("point", parents=[common, drive], help="analyse one operating point")
    p.set_defaults(func=cmd_point)
    p = sub.add_parser("angle", parents=[common, sweep], help="constant-power angle sweep")
    p.add_argument("--total-mw", type=float)
    p.add_argument("--phi", type=float, help="single angle in units of pi")
    p.add_argument("--compare", action="store_true", help="emit curves with and without GAWBS")
    p.set_defaults(func=cmd_angle)
    p = sub.add_parser("map", parents=[common, sweep], help="seed/pump amplitude map")
    p.set_defaults(func=cmd_map)
    p = sub.add_parser("synth", parents=[common, drive], help="synthesize homodyne runs")
    p.add_argument("--rng-seed", type=int, default=0, metavar="N")
    p.add_argument("--samples", type=int, metavar="N")
    p.add_argument("--dark-db", type=float, help="shot-noise to dark-noise clearance in dB")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--matrix", metavar="PATH", help="correlation matrix file to sample")
    src.add_argument("--published", action="store_true", help="sample the published matrix")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("estimate", parents=[common], help="estimate from four run files")
    p.add_argument("runs", nargs="+", help="four run files, or a directory written by synth")
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("fit-gawbs", parents=[common], help="fit GAWBS couplings")
    p.add_argument("--total-mw", type=float)
    p.set_defaults(func=cmd_fit_gawbs)
    p = sub.add_parser("edges", parents=[common], help="band edges of the angle sweep")
    p.add_argument("--total-mw", type=float)
    p.set_defaults(func=cmd_edges)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "no_gawbs", False) and args.command in ("fit-gawbs",):
        parser.error("--no-gawbs makes no sense for fit-gawbs")
    try:
        return args.func(args)
    except (ModelError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"harment {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
