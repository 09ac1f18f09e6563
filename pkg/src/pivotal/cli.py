"""Command-line front end: optimize, margin, validate, plot-data.

Exit codes: 0 success, 1 solve or validation failure, 2 usage or input error.
Set ``PIVOTAL_LOG`` (DEBUG, INFO, WARNING, ...) for log output on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .margin import KINDS, margin_profile
from .objects import BUNDLED, DomainError, load_object
from .ocp import OcpSpec, RejectedSolution
from .plan import MODES, PlanningError, plan
from .plotdata import margin_csv, margin_svg, parse_margin_csv, read_margin_csv, tidy_csv
from .solver import SolverOptions
from .trajectory import Trajectory
from .validate import mass_sweep, perturb_sweep, sweep_csv, sweep_summary

log = logging.getLogger("pivotal")


class UsageError(Exception):
    pass


def _write(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _object(source: str):
    if source not in BUNDLED and not Path(source).is_file():
        raise UsageError(f"object config not found: {source}")
    try:
        return load_object(source)
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise UsageError(f"bad object config {source}: {e}") from e


def _trajectory(path: str) -> Trajectory:
    if not Path(path).is_file():
        raise UsageError(f"trajectory not found: {path}")
    try:
        return Trajectory.load(path)
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise UsageError(f"bad trajectory {path}: {e}") from e


def _traj_object(traj: Trajectory, override):
    if override:
        return _object(override)
    try:
        return traj.object_params()
    except KeyError:
        raise UsageError("trajectory carries no object config; pass --object") from None


def margin_table(traj: Trajectory, obj) -> str:
    rows = [("kind", "worst +", "worst -", "unit")]
    for kind in KINDS:
        prof = margin_profile(traj, obj, kind)
        scale, unit = (1.0, "N") if kind == "mass" else (1e3, "mm")
        rows.append((kind, f"{prof.worst_plus * scale:.4f}", f"{prof.worst_minus * scale:.4f}", unit))
    note = "mass: + lighter, - heavier; com: + toward +x, - toward the wall"
    lines = [f"{a:<6} {b:>10} {c:>10}  {d}" for a, b, c, d in rows]
    return "\n".join([f"{traj.mode} trajectory, {traj.N} steps"] + lines + [note]) + "\n"


def cmd_optimize(args) -> int:
    obj = _object(args.object)
    opts = SolverOptions()
    if args.solver_opts:
        p = Path(args.solver_opts)
        if not p.is_file():
            raise UsageError(f"solver options file not found: {p}")
        opts = SolverOptions.from_dict(json.loads(p.read_text()))
    spec_kw = {"N": args.N}
    if args.p_start_mm is not None:
        spec_kw["p_start"] = args.p_start_mm * 1e-3
    try:
        spec = OcpSpec(**spec_kw)
        spec.resolved(obj)
    except DomainError as e:
        raise UsageError(str(e)) from e
    try:
        res = plan(obj, spec, args.mode, args.alpha, opts, args.cap)
    except (PlanningError, RejectedSolution) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.out:
        res.trajectory.save(args.out, meta=not args.no_meta)
    print(margin_table(res.trajectory, obj), end="")
    rob = res.trajectory.metadata.get("robust")
    if rob:
        print(f"embedded t+ = {rob['t_plus']:.6g}, t- = {rob['t_minus']:.6g} (alpha = {rob['alpha']})")
    return 0


def cmd_margin(args) -> int:
    traj = _trajectory(args.traj)
    obj = _traj_object(traj, args.object)
    prof = margin_profile(traj, obj, args.kind)
    _write(margin_csv(prof), args.out)
    if prof.infeasible.any():
        print(f"warning: {int(prof.infeasible.sum())} steps infeasible at the nominal parameters", file=sys.stderr)
    return 0


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def cmd_validate(args) -> int:
    if not args.true_mass_g and not args.com_shift_mm:
        raise UsageError("give --true-mass-g and/or --com-shift-mm")
    traj = _trajectory(args.traj)
    obj = _traj_object(traj, args.object)
    rows = []
    if args.true_mass_g:
        masses = _floats(args.true_mass_g, "--true-mass-g")
        if not masses:
            raise UsageError("--true-mass-g is empty")
        rows += mass_sweep(traj, obj, masses)
    if args.com_shift_mm:
        rows += perturb_sweep(traj, obj, r_list=[v * 1e-3 for v in _floats(args.com_shift_mm, "--com-shift-mm")])
    print(sweep_summary(rows))
    if args.out:
        _write(sweep_csv(rows), args.out)
    return 0 if all(r.passed for r in rows) else 1


def cmd_plot_data(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise UsageError(f"input not found: {src}")
    traj = obj = None
    if src.suffix == ".json":
        traj = _trajectory(args.input)
        obj = _traj_object(traj, args.object)
        cols, unit = _columns_from(traj, obj, args.kind)
    else:
        try:
            cols, unit = read_margin_csv(src)
        except ValueError as e:
            raise UsageError(str(e)) from e
        if args.traj:
            traj = _trajectory(args.traj)
            obj = _traj_object(traj, args.object)
    if args.format == "svg":
        text = margin_svg(cols, unit, traj, obj, args.snapshots)
    else:
        text = tidy_csv(cols, unit, traj, obj, args.snapshots)
    _write(text, args.out)
    return 0


def _columns_from(traj, obj, kind):
    return parse_margin_csv(margin_csv(margin_profile(traj, obj, kind)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pivotal", description="Robust pivoting trajectory planner.")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="plan a trajectory and print its worst-case margins")
    o.add_argument("--object", required=True, help=f"object config JSON or bundled name {BUNDLED}")
    o.add_argument("--mode", choices=MODES, default="nominal")
    o.add_argument("--alpha", type=float, default=0.001, help="weight of the minus-side margin")
    o.add_argument("--N", type=int, default=60, help="number of steps")
    o.add_argument("--p-start-mm", type=float, default=None, help="initial finger position on the far face")
    o.add_argument("--cap", type=float, default=None, help="margin cap (N or m); default 10 m g or 10 l")
    o.add_argument("--out", help="trajectory JSON to write")
    o.add_argument("--solver-opts", help="JSON file with solver options")
    o.add_argument("--no-meta", action="store_true", help="omit run-dependent metadata (timings)")
    o.set_defaults(func=cmd_optimize)

    m = sub.add_parser("margin", help="per-step margin bounds of a trajectory as CSV")
    m.add_argument("--traj", required=True)
    m.add_argument("--kind", choices=KINDS, default="mass")
    m.add_argument("--object", help="override the object stored in the trajectory")
    m.add_argument("--out", help="CSV path (default stdout)")
    m.set_defaults(func=cmd_margin)

    v = sub.add_parser("validate", help="static feasibility under true masses or CoM shifts")
    v.add_argument("--traj", required=True)
    v.add_argument("--true-mass-g", help="comma-separated true masses in grams")
    v.add_argument("--com-shift-mm", help="comma-separated horizontal CoM shifts in mm")
    v.add_argument("--object", help="override the object stored in the trajectory")
    v.add_argument("--out", help="CSV report path")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("plot-data", help="SVG or tidy CSV from a margin CSV or trajectory JSON")
    d.add_argument("--input", required=True, help="margin CSV or trajectory JSON")
    d.add_argument("--traj", help="trajectory JSON for pose snapshots when --input is a CSV")
    d.add_argument("--kind", choices=KINDS, default="mass", help="margin kind when --input is a trajectory")
    d.add_argument("--object", help="override the object stored in the trajectory")
    d.add_argument("--format", choices=("svg", "csv"), default="svg")
    d.add_argument("--snapshots", type=int, default=6)
    d.add_argument("--out", help="output path (default stdout)")
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    level = os.environ.get("PIVOTAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"pivotal {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
