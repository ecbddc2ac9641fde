"""Scenario orchestration behind the CLI: solve, sphere benchmark,
convergence study and the property table.

Every command returns an exit status and writes ASCII artifacts into the
output directory.  File layouts:

``report.txt``
    ``key: value`` lines in a fixed order (see ``REPORT_KEYS``).
``fields.csv``
    node, ring, angle_index, chart_x, chart_y, sphere_x, sphere_y, sphere_z,
    u, v, kappa1, kappa2, residual (kappas and residual blank on the rim).
``boundary_trace.csv``
    node, angle_index, prescribed_x/y/z, vertex_x/y/z, deviation.
``monitor.csv``
    one row per accepted continuation state.
``mesh.obj`` / ``grid.csv`` / ``checkpoint.csv``
    see ``radial_graph.write_obj``, ``ChartGrid.export_csv`` and
    ``continuation.write_checkpoint``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig
from .continuation import (CurvatureProblem, MonitorRecord, SolverConfig, newton_solve,
                           read_checkpoint, run_two_stage)
from .curvature_op import SubsolutionError
from .properties import run_suite
from .radial_graph import embed_mesh, graph_geometry, write_obj
from .sphere_chart import ChartGrid, boundary_mean_convexity, build_grid
from .symfun import AdmissibilityError

log = logging.getLogger(__name__)

REPORT_KEYS = ("command", "status", "converged", "exit_code", "failure", "error_class",
               "grid", "accuracy", "psi_tilde", "subsolution_margin", "stages_completed",
               "accepted_steps", "newton_iterations_total", "newton_iterations_max",
               "final_residual", "boundary_trace_max_deviation", "splice_bitwise",
               "comparison_violations", "min_v_minus_vunder", "inf_u", "sup_u", "sup_grad_u",
               "bound_L", "min_cone_margin", "boundary_mean_convexity", "warning",
               "wall_clock_s")

FIELD_COLUMNS = ("node", "ring", "angle_index", "chart_x", "chart_y", "sphere_x", "sphere_y",
                 "sphere_z", "u", "v", "kappa1", "kappa2", "residual")


# -- problem setup -------------------------------------------------------------------------

def boundary_phi(cfg: RunConfig, grid: ChartGrid) -> np.ndarray:
    """Prescribed boundary radius on every node (only rim entries matter)."""
    phi = np.ones(grid.size)
    bnd = grid.boundary
    if cfg.phi_samples is not None:
        phi[bnd] = np.asarray(cfg.phi_samples, dtype=float)
    else:
        phi[bnd] = cfg.phi
    return phi


def read_subsolution_csv(path, grid: ChartGrid) -> np.ndarray:
    """CSV with header ``node,rho_bar`` covering every grid node."""
    rho = np.full(grid.size, np.nan)
    with open(path, newline="", encoding="ascii") as fh:
        for row in csv.DictReader(fh):
            rho[int(row["node"])] = float(row["rho_bar"])
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise ValueError(f"{path}: rho_bar must be given and positive at all {grid.size} nodes")
    return rho


def build_problem(cfg: RunConfig, grid: ChartGrid | None = None, check_margin: bool = True):
    """Grid, boundary data and subsolution for a validated configuration."""
    grid = grid or build_grid(cfg.domain, cfg.ns, cfg.nt, cfg.accuracy)
    phi = boundary_phi(cfg, grid)
    if cfg.subsolution == "unit-sphere":
        rho_bar = np.ones(grid.size)
    else:
        rho_bar = read_subsolution_csv(cfg.subsolution_file, grid)
    bnd = grid.boundary
    dev = np.max(np.abs(rho_bar[bnd] - phi[bnd]) / phi[bnd])
    if dev > 1e-12:
        raise ValueError(f"subsolution differs from phi on the boundary (relative {dev:.3e})")
    v_under = -np.log(rho_bar)
    v_boundary = v_under.copy()
    v_boundary[bnd] = -np.log(phi[bnd])
    psi = cfg.psi_tilde_field(grid.points)
    return CurvatureProblem(grid, cfg.spec, psi, v_under, v_boundary, check_margin=check_margin)


# -- reports and CSV ----------------------------------------------------------------------

def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if isinstance(val, np.integer):
        return str(int(val))
    if isinstance(val, (list, tuple)):
        return ",".join(_fmt(x) for x in val)
    return str(val)


def write_report(path, items: dict) -> None:
    """Known keys first in ``REPORT_KEYS`` order, extras afterwards sorted."""
    keys = [k for k in REPORT_KEYS if k in items] + sorted(set(items) - set(REPORT_KEYS))
    with open(path, "w", encoding="ascii") as fh:
        for k in keys:
            fh.write(f"{k}: {_fmt(items[k])}\n")


def read_report(path) -> dict:
    out = {}
    with open(path, encoding="ascii") as fh:
        for line in fh:
            key, sep, val = line.rstrip("\n").partition(": ")
            if sep:
                out[key] = val
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if not isinstance(x, float) or math.isfinite(x) else "" for x in row])


def read_csv_columns(path) -> dict:
    """Columns of a numeric CSV as float arrays (blank cells -> NaN)."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for k, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[k]) if r[k] else np.nan for r in body])
        except ValueError:
            cols[name] = np.array([r[k] for r in body])
    return cols


def write_fields_csv(path, grid: ChartGrid, v, residual) -> None:
    u = np.exp(v)
    kappa = graph_geometry(grid, u).kappa
    kappa = np.where(grid.interior[:, None], kappa, np.nan)
    res = np.where(grid.interior, residual, np.nan)
    angle = np.where(grid.ring == 0, 0, (np.arange(grid.size) - 1) % grid.nt)
    rows = (
        (k, int(grid.ring[k]), int(angle[k]), *map(float, grid.xy[k]), *map(float, grid.points[k]),
         float(u[k]), float(v[k]), float(kappa[k, 0]), float(kappa[k, 1]), float(res[k]))
        for k in range(grid.size)
    )
    _write_csv(path, FIELD_COLUMNS, rows)


def write_boundary_trace(path, grid: ChartGrid, v, phi) -> float:
    """Mesh rim vertices against the prescribed boundary points; returns max deviation."""
    ids = np.flatnonzero(grid.boundary)
    x = grid.points[ids]
    prescribed = phi[ids, None] * x
    vertex = x / np.exp(v[ids])[:, None]
    dev = np.linalg.norm(vertex - prescribed, axis=1)
    rows = ((int(k), j, *map(float, prescribed[j]), *map(float, vertex[j]), float(dev[j]))
            for j, k in enumerate(ids))
    _write_csv(path, ("node", "angle_index", "prescribed_x", "prescribed_y", "prescribed_z",
                      "vertex_x", "vertex_y", "vertex_z", "deviation"), rows)
    return float(dev.max())


def write_monitor_csv(path, records: list) -> None:
    names = [f.name for f in fields(MonitorRecord)]
    _write_csv(path, names, ([getattr(r, n) for n in names] for r in records))


# -- commands ------------------------------------------------------------------------------

@dataclass
class SolveOutcome:
    exit_code: int
    report: dict
    v: np.ndarray | None = None
    grid: ChartGrid | None = None


def _failure_report(command: str, exc: Exception, grid_label: str) -> dict:
    return {"command": command, "status": "rejected", "converged": False, "exit_code": 2,
            "failure": str(exc), "error_class": type(exc).__name__, "grid": grid_label}


def cmd_solve(cfg: RunConfig, out_dir, resume=None, plots: bool = True) -> SolveOutcome:
    """Two-stage continuation solve plus all artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    resume_state = None
    if resume is not None:
        resume_state, (ns, nt) = read_checkpoint(resume)
        if (ns, nt) != (cfg.ns, cfg.nt):
            log.info("resuming on the checkpoint grid %dx%d", ns, nt)
            cfg = cfg.with_grid(ns, nt)
    label = f"{cfg.ns}x{cfg.nt}"
    kmin = boundary_mean_convexity(cfg.domain)
    warning = None
    if kmin < 0:
        warning = (f"boundary_mean_convexity: boundary geodesic curvature reaches {kmin:.4g} < 0 "
                   "(domain is not mean convex)")
        log.warning(warning)
    try:
        problem = build_problem(cfg)
    except (SubsolutionError, AdmissibilityError, ValueError) as exc:
        report = _failure_report("solve", exc, label)
        report.update(boundary_mean_convexity=kmin, warning=warning)
        write_report(out / "report.txt", report)
        return SolveOutcome(2, report)
    grid = problem.grid
    grid.export_csv(out / "grid.csv")

    result = run_two_stage(problem, cfg.solver, resume=resume_state,
                           checkpoint=out / "checkpoint.csv")
    rep = result.report
    v = result.v
    try:
        residual = problem.residual(v, "xi", 1.0)
    except AdmissibilityError:
        residual = np.full(grid.size, np.nan)
    write_fields_csv(out / "fields.csv", grid, v, residual)
    write_obj(embed_mesh(grid, np.exp(v)), out / "mesh.obj")
    trace = write_boundary_trace(out / "boundary_trace.csv", grid, v, boundary_phi(cfg, grid))
    write_monitor_csv(out / "monitor.csv", result.state.monitors)

    its = [k for (_, _, k) in rep.newton_iterations]
    ext = rep.monitor_extrema
    code = 0 if rep.converged else 1
    report = {
        "command": "solve", "status": "converged" if rep.converged else "aborted",
        "converged": rep.converged, "exit_code": code, "failure": rep.failure,
        "grid": label, "accuracy": cfg.accuracy,
        "psi_tilde": float(np.max(problem.psi_tilde)) if cfg.psi_tilde is not None else cfg.psi_expr,
        "subsolution_margin": problem.margin, "stages_completed": rep.stages_completed,
        "accepted_steps": len(its), "newton_iterations_total": int(sum(its)),
        "newton_iterations_max": int(max(its, default=0)), "final_residual": rep.final_residual,
        "boundary_trace_max_deviation": trace, "splice_bitwise": rep.splice_bitwise,
        "comparison_violations": rep.comparison_violations,
        "boundary_mean_convexity": kmin, "warning": warning,
        "wall_clock_s": time.perf_counter() - t0,
    }
    report.update({k: float(val) for k, val in ext.items()})
    if not rep.converged:
        report["checkpoint"] = "checkpoint.csv"
    if resume is not None:
        report["resumed_from"] = str(resume)
    write_report(out / "report.txt", report)
    if plots:
        u = np.exp(v)
        plotting.plot_solution(grid, 1.0 / u, graph_geometry(grid, u).kappa, residual,
                               out / "solution.png", title=f"solve {label}")
        if result.state.monitors:
            plotting.plot_monitors(result.state.monitors, out / "monitors.png")
    return SolveOutcome(code, report, v, grid)


def exact_sphere_rho(points, theta0: float, psi_tilde: float) -> np.ndarray:
    """Radius of the sphere of curvature ``psi_tilde`` through the cap rim.

    Center (0, 0, c0) and radius a = 1/psi_tilde, with c0 taken on the branch
    that keeps rho <= 1 inside the cap when psi_tilde < 1.
    """
    a = 1.0 / psi_tilde
    disc = a * a - math.sin(theta0) ** 2
    if disc < 0:
        raise ValueError(f"psi_tilde = {psi_tilde:.6g} is too large: no sphere of radius {a:.6g} "
                         f"passes through the cap rim (need psi_tilde <= 1/sin(theta0))")
    c0 = math.cos(theta0) - math.sqrt(disc)
    mu = np.asarray(points)[..., 2]
    return c0 * mu + np.sqrt(c0 * c0 * mu * mu - c0 * c0 + a * a)


def _check_sphere_oracle(cfg: RunConfig) -> float:
    if cfg.domain.kind != "cap":
        raise ValueError("the sphere benchmark needs a cap domain")
    if cfg.psi_tilde is None:
        raise ValueError("the sphere benchmark needs a constant psi_tilde")
    if cfg.phi_samples is not None or cfg.phi != 1.0 or cfg.subsolution != "unit-sphere":
        raise ValueError("the sphere benchmark needs phi = 1 and the unit-sphere subsolution")
    if cfg.spec.n != 2:
        raise ValueError("the sphere benchmark is implemented for n = 2")
    psi = cfg.psi_tilde
    exact_sphere_rho(np.array([0.0, 0.0, 1.0]), cfg.domain.theta0, psi)
    return psi


def solve_exact_case(cfg: RunConfig, ns: int, nt: int, config: SolverConfig | None = None):
    """Numerical solve plus the max-node error against the exact sphere.

    When the unit cap itself has no positive margin (psi_tilde >= 1) the
    target equation is solved directly by Newton from the unit cap.
    """
    psi = _check_sphere_oracle(cfg)
    grid = build_grid(cfg.domain, ns, nt, cfg.accuracy)
    t0 = time.perf_counter()
    try:
        problem = build_problem(cfg, grid)
    except SubsolutionError:
        problem = build_problem(cfg, grid, check_margin=False)
        res = newton_solve(problem, problem.v_under, "xi", 1.0, config or cfg.solver)
        v, converged, its, resid = res.v, True, res.iterations, res.residual_norm
    else:
        result = run_two_stage(problem, config or cfg.solver)
        v = result.v
        converged = result.report.converged
        its = sum(k for (_, _, k) in result.report.newton_iterations)
        resid = result.report.final_residual
    elapsed = time.perf_counter() - t0
    rho = np.exp(-v)
    exact = exact_sphere_rho(grid.points, cfg.domain.theta0, psi)
    return {"ns": ns, "nt": nt, "h": grid.hs, "error": float(np.max(np.abs(rho - exact))),
            "converged": converged, "newton_iterations": int(its), "final_residual": float(resid),
            "seconds": elapsed, "grid": grid, "v": v}


def _orders(rows):
    out = [float("nan")]
    for a, b in zip(rows, rows[1:]):
        if a["error"] > 0 and b["error"] > 0:
            out.append(math.log(a["error"] / b["error"]) / math.log(a["h"] / b["h"]))
        else:
            out.append(float("nan"))
    return out


STUDY_COLUMNS = ("ns", "nt", "h", "error", "order", "converged", "newton_iterations",
                 "final_residual", "seconds")


def _table(rows, orders):
    return [(r["ns"], r["nt"], r["h"], r["error"], o, r["converged"], r["newton_iterations"],
             r["final_residual"], r["seconds"]) for r, o in zip(rows, orders)]


def _print_table(rows, orders, echo):
    echo(",".join(STUDY_COLUMNS))
    for row in _table(rows, orders):
        echo(",".join(_fmt(x) for x in row))


def cmd_benchmark_sphere(cfg: RunConfig, out_dir, grids=None, echo=print, plots: bool = True) -> int:
    """Error against the exact sphere on two nested grids and the observed order."""
    grids = grids or [(cfg.ns, cfg.nt), (2 * cfg.ns - 1, 2 * cfg.nt)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [solve_exact_case(cfg, ns, nt) for ns, nt in grids]
    orders = _orders(rows)
    _write_csv(out / "benchmark.csv", STUDY_COLUMNS, _table(rows, orders))
    _print_table(rows, orders, echo)
    ok = all(r["converged"] for r in rows)
    report = {"command": "benchmark-sphere", "status": "converged" if ok else "aborted",
              "converged": ok, "exit_code": 0 if ok else 1, "psi_tilde": cfg.psi_tilde,
              "grid": [f"{r['ns']}x{r['nt']}" for r in rows],
              "errors": [repr(r["error"]) for r in rows],
              "orders": [repr(o) for o in orders[1:]]}
    write_report(out / "report.txt", report)
    if plots:
        fine = rows[-1]
        grid = fine["grid"]
        u = np.exp(fine["v"])
        err = np.exp(-fine["v"]) - exact_sphere_rho(grid.points, cfg.domain.theta0, cfg.psi_tilde)
        plotting.plot_solution(grid, 1.0 / u, graph_geometry(grid, u).kappa, err,
                               out / "benchmark.png", title="error against the exact sphere")
    return 0 if ok else 1


def _nested_nodes(coarse: ChartGrid, fine: ChartGrid) -> np.ndarray:
    """Indices in ``fine`` of the nodes of ``coarse`` (grids must nest)."""
    fs, ft = (fine.ns - 1) / (coarse.ns - 1), fine.nt / coarse.nt
    if fs != int(fs) or ft != int(ft):
        raise ValueError(f"grids {coarse.ns}x{coarse.nt} and {fine.ns}x{fine.nt} do not nest")
    ids = [0]
    for i in range(1, coarse.ns):
        for j in range(coarse.nt):
            ids.append(fine.index(int(i * fs), int(j * ft)))
    return np.array(ids)


def cmd_convergence_study(cfg: RunConfig, out_dir, grids, echo=print, plots: bool = True) -> int:
    """Errors over a grid sequence: against the exact sphere when available,
    otherwise against the finest solve at shared nodes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _check_sphere_oracle(cfg)
        exact = True
    except ValueError:
        exact = False
    if exact:
        rows = [solve_exact_case(cfg, ns, nt) for ns, nt in grids]
    else:
        rows = []
        for ns, nt in grids:
            oc = cmd_solve(cfg.with_grid(ns, nt), out / f"grid_{ns}x{nt}", plots=False)
            rows.append({"ns": ns, "nt": nt, "h": 1.0 / (ns - 1), "converged": oc.exit_code == 0,
                         "newton_iterations": oc.report.get("newton_iterations_total", 0),
                         "final_residual": oc.report.get("final_residual", float("nan")),
                         "seconds": oc.report.get("wall_clock_s", float("nan")),
                         "grid": oc.grid, "v": oc.v})
        ref = rows[-1]
        for r in rows:
            if r["v"] is None or ref["v"] is None:
                r["error"] = float("nan")
                continue
            ids = _nested_nodes(r["grid"], ref["grid"])
            r["error"] = float(np.max(np.abs(np.exp(-r["v"]) - np.exp(-ref["v"][ids]))))
        rows = rows[:-1]
    orders = _orders(rows)
    _write_csv(out / "convergence.csv", STUDY_COLUMNS, _table(rows, orders))
    _print_table(rows, orders, echo)
    if plots and len(rows) >= 2:
        label = "max |rho - rho_exact|" if exact else "max |rho - rho_finest|"
        plotting.plot_convergence([r["h"] for r in rows], [r["error"] for r in rows],
                                  out / "convergence.png", label)
    return 0 if all(r["converged"] for r in rows) else 1


def cmd_check_properties(seed: int = 0, scale: float = 1.0, mutate: str | None = None,
                         out_dir=None, echo=print) -> int:
    """Print one row per property; nonzero exit if any fails."""
    h_sign = -1.0 if mutate == "h-sign" else 1.0
    rows = run_suite(seed=seed, scale=scale, h_sign=h_sign)
    width = max(len(r.name) for r in rows)
    echo(f"{'property':<{width}}  {'max_violation':>13}  {'tolerance':>9}  {'samples':>7}  verdict")
    for r in rows:
        echo(f"{r.name:<{width}}  {r.max_violation:>13.3e}  {r.tolerance:>9.1e}  {r.samples:>7d}  "
             f"{'PASS' if r.passed else 'FAIL'}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "properties.csv", ("property", "max_violation", "tolerance", "samples", "passed"),
                   ((r.name, float(r.max_violation), r.tolerance, r.samples, r.passed) for r in rows))
    return 0 if all(r.passed for r in rows) else 1
