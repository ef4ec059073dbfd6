"""Slab-by-slab time stepping, run reports and convergence studies.

Each slab ``[t_n, t_n+1]`` performs, in order: an Euler step of Darcy's law
for the boundary vertices, an MMPDE mesh move using the metric built from
``v_h^n``, and an implicit finite element solve on the linearly moving mesh.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import shapely

from . import exact
from .boundary import RECOVERY, apply_boundary, darcy_step, write_boundary_csv
from .errors import NonPositiveArea, PMEError
from .fem import MeshTrajectory, step_physical
from .mesh import write_vtk
from .meshgen import make_initial_mesh
from .metric import build_metric
from .mmpde import BoundarySliding, MmpdeParams, move_mesh, tau_rule
from .radau import RadauStats

logger = logging.getLogger(__name__)

EXAMPLES = ("bp", "waiting", "complex")
DEFAULT_T_END = {"waiting": 0.9, "complex": 0.75}


@dataclass
class SimulationConfig:
    example: str = "bp"
    m: float = 2.0
    n_target: int = 2000
    r0: float = 0.5
    dt_max: float = 1e-4
    tau: float | None = None  # None: min(1e-3, 0.1 / N)
    theta: float = 1.0 / 3.0
    p: float = 2.0
    metric_floor: float = 1e-5
    t_start: float | None = None  # None: t0 for bp, 0 otherwise
    t_end: float | None = None  # None: (t0 + 0.1) / 2 for bp, see DEFAULT_T_END otherwise
    rtol: float = 1e-6
    atol: float = 1e-8
    xi_rtol: float = 1e-6
    xi_atol: float = 1e-8
    boundary_sliding: bool = True
    gradient_recovery: str = "average"  # boundary gradient for the Darcy step: "average" or "ppr"
    snapshot_every: int = 0  # slabs between snapshots; 0 keeps only first and last
    output_dir: str | None = None
    write_vtk: bool = True

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"example must be one of {EXAMPLES}, got {self.example!r}")
        if self.example != "bp" and self.m != 2.0:
            logger.warning("the %s initial data is defined for m = 2; running with m = %s", self.example, self.m)
        if self.gradient_recovery not in RECOVERY:
            raise ValueError(f"gradient_recovery must be one of {tuple(RECOVERY)}, got {self.gradient_recovery!r}")
        if self.n_target < 16:
            raise ValueError("n_target must be >= 16")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if self.t_end_value() < self.t_start_value():
            raise ValueError("t_end must not precede t_start")

    @property
    def bp(self):
        return exact.BpParams(m=self.m, r0=self.r0)

    def t_start_value(self):
        if self.t_start is not None:
            return float(self.t_start)
        return self.bp.t0 if self.example == "bp" else 0.0

    def t_end_value(self):
        if self.t_end is not None:
            return float(self.t_end)
        if self.example == "bp":
            return (self.bp.t0 + 0.1) / 2
        return DEFAULT_T_END[self.example]

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class RunReport:
    config: dict
    status: str = "ok"
    message: str = ""
    n_elements: int = 0
    n_vertices: int = 0
    tau: float = 0.0
    t_final: float = 0.0
    n_slabs: int = 0
    max_slab: float = 0.0
    wall_time: float = 0.0
    snapshots: list = field(default_factory=list)
    displacement: list = field(default_factory=list)  # (t, max boundary displacement)
    min_area: float = np.inf
    worst_negative_ratio: float = 0.0  # min over slabs of min(v) / max(v)
    integrator: dict = field(default_factory=dict)
    boundary_trace: list = field(default_factory=list, repr=False)
    final_mesh: object = field(default=None, repr=False)
    final_v: object = field(default=None, repr=False)

    EXIT_CODES = {"ok": 0, "mesh_tangled": 2, "boundary_collision": 3, "integrator_failure": 4, "error": 1}

    @property
    def exit_code(self):
        return self.EXIT_CODES.get(self.status, 1)

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def final_errors(self):
        for snap in reversed(self.snapshots):
            if "errors" in snap:
                return snap["errors"]
        return None

    def to_json_dict(self):
        skip = {"boundary_trace", "final_mesh", "final_v"}
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in skip}
        out["exit_code"] = self.exit_code
        if not np.isfinite(out["min_area"]):
            out["min_area"] = None
        return out


def _status_for(exc):
    from .errors import BoundaryCollision, MeshTangled, NewtonDivergence

    if isinstance(exc, (MeshTangled, NonPositiveArea)):
        return "mesh_tangled"
    if isinstance(exc, BoundaryCollision):
        return "boundary_collision"
    if isinstance(exc, NewtonDivergence):
        return "integrator_failure"
    return "error"


def initial_values(config: SimulationConfig, mesh):
    x = mesh.vertices
    if config.example == "bp":
        v = exact.bp_value(x, config.t_start_value(), config.bp)
    elif config.example == "waiting":
        v = exact.ic_waiting(x, m=2.0)
    else:
        v = exact.ic_complex(x)
    v = np.array(v, dtype=float)
    v[mesh.n_interior :] = 0.0
    return v


def time_grid(t_start, t_end, dt_max):
    """Slab end points with fixed length ``dt_max`` and a final partial slab."""
    if t_end <= t_start:
        return np.array([t_start])
    n_full = int(np.floor((t_end - t_start) / dt_max * (1 + 1e-12)))
    grid = t_start + dt_max * np.arange(n_full + 1)
    if t_end - grid[-1] > 1e-12 * max(1.0, abs(t_end)):
        grid = np.append(grid, t_end)
    grid[-1] = t_end
    return grid


def run_simulation(config: SimulationConfig, mesh=None) -> RunReport:
    """Run one simulation; failures are reported in ``report.status`` rather than raised."""
    wall0 = time.perf_counter()
    report = RunReport(config=config.to_dict())
    if mesh is None:
        mesh = make_initial_mesh(config.example, config.n_target, config.r0)
    reference = mesh.copy()
    report.n_elements = mesh.n_elements
    report.n_vertices = mesh.n_vertices
    tau = config.tau if config.tau is not None else tau_rule(mesh.n_elements)
    report.tau = tau
    params = MmpdeParams(theta=config.theta, p=config.p, tau=tau)
    sliding = BoundarySliding(reference, fixed=not config.boundary_sliding)
    grid = time_grid(config.t_start_value(), config.t_end_value(), config.dt_max)
    bp = config.bp if config.example == "bp" else None

    v = initial_values(config, mesh)
    # boundary displacement is measured from the initial boundary curve, so
    # vertices sliding along the boundary do not count as motion
    gamma0 = shapely.MultiLineString([mesh.vertices[np.append(loop, loop[0])] for loop in mesh.boundary_loops])
    radau_stats = RadauStats()
    xi_stats = {}
    speeds = np.zeros(mesh.n_vertices - mesh.n_interior)
    last_step = None
    outdir = config.output_dir
    if outdir:
        os.makedirs(outdir, exist_ok=True)

    def record(step, t):
        snap = {"step": step, "t": float(t), "min_v": float(v.min()), "max_v": float(v.max())}
        if bp is not None:
            snap["errors"] = exact.error_norms(mesh, v, t, bp)
        report.snapshots.append(snap)
        bids = np.arange(mesh.n_interior, mesh.n_vertices)
        for j, (x, y), s in zip(bids, mesh.vertices[mesh.n_interior :], speeds):
            report.boundary_trace.append((float(t), int(j), float(x), float(y), float(s)))
        if outdir and config.write_vtk:
            write_vtk(mesh, os.path.join(outdir, f"mesh_{step}.vtk"), v)

    report.displacement.append((float(grid[0]), 0.0))
    report.min_area = float(mesh.signed_areas().min())
    record(0, grid[0])
    n = 0
    try:
        for n in range(1, len(grid)):
            t0, t1 = float(grid[n - 1]), float(grid[n])
            dt = t1 - t0
            state = darcy_step(mesh, v, dt, recovery=config.gradient_recovery)
            speeds = state.speeds
            tilde = apply_boundary(mesh, state)
            metric = build_metric(tilde, v, config.metric_floor)
            new_mesh, _ = move_mesh(
                tilde,
                metric,
                params,
                reference,
                (t0, t1),
                sliding=sliding,
                rtol=config.xi_rtol,
                atol=config.xi_atol,
                stats=xi_stats,
            )
            traj = MeshTrajectory(mesh, new_mesh, t0, t1)
            v, _ = step_physical(v, traj, config.m, config.rtol, config.atol, first_step=last_step, stats=radau_stats)
            last_step = radau_stats.last_step
            mesh = new_mesh
            report.n_slabs = n
            report.t_final = t1
            report.max_slab = max(report.max_slab, dt)
            report.min_area = min(report.min_area, float(mesh.signed_areas().min()))
            vmax = float(v.max())
            if vmax > 0:
                report.worst_negative_ratio = min(report.worst_negative_ratio, float(v.min()) / vmax)
            disp = float(np.max(shapely.distance(shapely.points(mesh.vertices[mesh.n_interior :]), gamma0)))
            report.displacement.append((t1, disp))
            if n == len(grid) - 1 or (config.snapshot_every and n % config.snapshot_every == 0):
                record(n, t1)
            if n % 200 == 0:
                logger.info("slab %d/%d t=%.6f", n, len(grid) - 1, t1)
    except PMEError as exc:
        report.status = _status_for(exc)
        report.message = f"slab {n} (t={grid[n - 1]:.6g}): {exc}"
        logger.error("run aborted: %s", report.message)
    report.t_final = float(grid[report.n_slabs])
    report.final_mesh = mesh
    report.final_v = v
    report.integrator = {
        "radau_steps": radau_stats.steps,
        "radau_rejected": radau_stats.rejected,
        "radau_newton_failures": radau_stats.newton_failures,
        "radau_nfev": radau_stats.nfev,
        "radau_nlu": radau_stats.nlu,
        **xi_stats,
    }
    report.wall_time = time.perf_counter() - wall0
    if outdir:
        write_outputs(report, outdir)
    return report


def write_outputs(report: RunReport, outdir):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    rows = [s for s in report.snapshots if "errors" in s]
    if rows:
        with open(os.path.join(outdir, "errors.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "L1_v", "L2_v", "L1_u", "L2_u", "Linf_b"])
            for s in rows:
                e = s["errors"]
                w.writerow([repr(s["t"])] + [repr(e[k]) for k in ("L1_v", "L2_v", "L1_u", "L2_u", "Linf_b")])
    write_boundary_csv(os.path.join(outdir, "boundary.csv"), report.boundary_trace)


# --- convergence studies ---------------------------------------------------

NORMS = ("L1_v", "L2_v", "L1_u", "L2_u", "Linf_b")


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``; ``None`` with fewer than two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


@dataclass
class ConvergenceTable:
    variable: str  # "h" or "dt_max"
    rows: list
    slopes: dict

    def format(self):
        head = ["N", "h", "dt_max"] + list(NORMS) + ["status"]
        lines = ["  ".join(f"{c:>11s}" for c in head)]
        for r in self.rows:
            vals = [f"{r['N']:>11d}", f"{r['h']:>11.4e}", f"{r['dt_max']:>11.3e}"]
            vals += [f"{r[k]:>11.4e}" if r.get(k) is not None else f"{'-':>11s}" for k in NORMS]
            vals.append(f"{r['status']:>11s}")
            lines.append("  ".join(vals))
        slope = ["slope", "", ""] + [f"{self.slopes[k]:.3f}" if self.slopes.get(k) is not None else "" for k in NORMS]
        lines.append("  ".join(f"{c:>11s}" for c in slope))
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "h", "dt_max", *NORMS, "status"])
            for r in self.rows:
                w.writerow([r["N"], r["h"], r["dt_max"], *[r.get(k) for k in NORMS], r["status"]])
            w.writerow(["slope", "", "", *[self.slopes.get(k) for k in NORMS], ""])


def convergence_study(config: SimulationConfig, n_list, dt_list=None, run=run_simulation):
    """Barenblatt-Pattle errors at ``t_end`` over a mesh (or time-step) sequence.

    With ``dt_list`` the mesh is fixed at ``n_list[-1]`` and ``dt_max`` varies;
    slopes are then taken against ``dt_max`` instead of ``h = N^(-1/2)``.
    """
    if config.example != "bp":
        raise ValueError("convergence studies need the exact Barenblatt-Pattle solution")
    if not n_list:
        raise ValueError("n_list must not be empty")
    if dt_list:
        cases = [config.replace(n_target=int(n_list[-1]), dt_max=float(dt)) for dt in dt_list]
        variable = "dt_max"
    else:
        cases = [config.replace(n_target=int(n)) for n in n_list]
        variable = "h"
    rows = []
    for case in cases:
        rep = run(case.replace(output_dir=None))
        row = {
            "N": rep.n_elements,
            "h": 1.0 / np.sqrt(rep.n_elements),
            "dt_max": case.dt_max,
            "status": rep.status,
            "wall_time": rep.wall_time,
        }
        errs = rep.final_errors if rep.ok else None
        for k in NORMS:
            row[k] = None if errs is None else errs[k]
        rows.append(row)
        logger.info("study case N=%d dt=%.2e: %s", row["N"], case.dt_max, rep.status)
    xs = [r[variable] for r in rows]
    slopes = {k: fit_slope(xs, [np.nan if r[k] is None else r[k] for r in rows]) for k in NORMS}
    return ConvergenceTable(variable, rows, slopes)
