"""Command line interface: ``pme run``, ``pme converge`` and ``pme bp-table``.

Exit codes: 0 success, 1 other failure, 2 mesh tangled, 3 boundary
collision (topology change), 4 time integrator failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import exact
from .driver import SimulationConfig, convergence_study, run_simulation


def _float_list(text):
    return [float(s) for s in text.split(",") if s.strip()]


def _int_list(text):
    return [int(s) for s in text.split(",") if s.strip()]


def _load_config(args):
    cfg = SimulationConfig.from_json(args.config) if args.config else SimulationConfig()
    overrides = {}
    for key in ("example", "m", "n_target", "dt_max", "t_end", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return cfg.replace(**overrides) if overrides else cfg


def cmd_run(args):
    cfg = _load_config(args)
    rep = run_simulation(cfg)
    summary = {
        "status": rep.status,
        "message": rep.message,
        "N": rep.n_elements,
        "slabs": rep.n_slabs,
        "t_final": rep.t_final,
        "wall_time": round(rep.wall_time, 2),
    }
    if rep.final_errors:
        summary["errors"] = rep.final_errors
    print(json.dumps(summary, indent=2))
    return rep.exit_code


def cmd_converge(args):
    cfg = _load_config(args)
    dts = _float_list(args.dtmax) if args.dtmax else None
    table = convergence_study(cfg, _int_list(args.n), dts)
    print(table.format())
    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        table.write_csv(os.path.join(cfg.output_dir, "convergence.csv"))
    return 0 if all(r["status"] == "ok" for r in table.rows) else 1


def cmd_bp_table(args):
    p = exact.BpParams(m=args.m, r0=args.r0)
    t = p.t0 if args.t is None else args.t
    radii = np.linspace(0.0, 1.1 * exact.bp_boundary_radius(t, p), args.points)
    x = np.column_stack([radii, np.zeros_like(radii)])
    v = exact.bp_value(x, t, p)
    print(f"# m={p.m} r0={p.r0} t0={p.t0:.10g} t={t:.10g} lambda={p.lam(t):.10g}")
    print(f"# boundary radius={exact.bp_boundary_radius(t, p):.10g} speed={exact.bp_boundary_speed(t, p):.10g}")
    print("r,v,u")
    for r, vv in zip(radii, v):
        print(f"{r:.10g},{vv:.10g},{exact.u_from_v(vv, p.m):.10g}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="pme", description="Moving mesh solver for the porous medium equation")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def sim_args(p):
        p.add_argument("--config", help="JSON file with SimulationConfig fields")
        p.add_argument("--example", choices=["bp", "waiting", "complex"])
        p.add_argument("--m", type=float)
        p.add_argument("--n-target", dest="n_target", type=int)
        p.add_argument("--dt-max", dest="dt_max", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("run", help="run one simulation")
    sim_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", help="Barenblatt-Pattle convergence study")
    sim_args(p)
    p.add_argument("--n", default="500,2000,8000", help="comma-separated element counts")
    p.add_argument("--dtmax", help="comma-separated dt_max values (time study at the last N)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("bp-table", help="tabulate the Barenblatt-Pattle solution along a ray")
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--r0", type=float, default=0.5)
    p.add_argument("--t", type=float, help="time (default t0)")
    p.add_argument("--points", type=int, default=11)
    p.set_defaults(func=cmd_bp_table)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
