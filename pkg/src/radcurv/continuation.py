"""Damped Newton and two-stage parameter continuation.

Stage ``psi`` walks t from 0 to 1 starting at the subsolution, which solves
the t = 0 equation exactly.  Stage ``xi`` then walks s from 0 to 1; its
s = 0 equation coincides with the psi-stage t = 1 equation, and its s = 1
equation is the target F(A[v]) = psi_tilde.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .curvature_op import (RHSField, assemble_jacobian, curvature_matrix_v, f_of_v, linearize_v,
                           residual_v, rhs_psi_family, rhs_xi_family, subsolution_margin)
from .sphere_chart import ChartGrid, covariant_gradient, covariant_hessian
from .symfun import AdmissibilityError, CurvatureSpec, cone_margins

log = logging.getLogger(__name__)

STAGES = ("psi", "xi")
COMPARISON_TOL = 1e-10


@dataclass
class SolverConfig:
    initial_step: float = 0.1
    max_step: float = 0.2
    min_step: float = 1e-4
    grow: float = 1.5
    fast_newton: int = 4
    max_newton: int = 30
    rtol: float = 1e-10
    armijo: float = 1e-4
    backtrack: float = 0.5
    alpha_min: float = 1e-6
    # test hook: every line search at stage ``fail_stage`` with param >= fail_at hits the floor
    fail_at: float | None = None
    fail_stage: str = "psi"


class NewtonFailure(RuntimeError):
    def __init__(self, reason: str, iterations: int, residual: float):
        self.reason = reason
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{reason} after {iterations} iterations (residual {residual:.3e})")


@dataclass
class NewtonResult:
    v: np.ndarray
    iterations: int
    residual_norm: float
    damped: bool


class CurvatureProblem:
    """Discrete Dirichlet problem F(A[v]) = psi_tilde, v = v_boundary on the rim.

    ``v_under`` is the subsolution (ln of 1/rho_bar); its curvature defines
    ``psi_bar``.  Raises ``SubsolutionError`` if it does not dominate, unless
    ``check_margin`` is false (direct solves that skip continuation).
    """

    def __init__(self, grid: ChartGrid, spec: CurvatureSpec, psi_tilde, v_under, v_boundary=None,
                 check_margin: bool = True):
        self.grid = grid
        self.spec = spec
        self.psi_tilde = np.array(np.broadcast_to(np.asarray(psi_tilde, dtype=float), (grid.size,)))
        self.v_under = np.asarray(v_under, dtype=float).copy()
        self.v_boundary = self.v_under.copy() if v_boundary is None else np.asarray(v_boundary, float)
        bnd = grid.boundary
        if np.max(np.abs(self.v_boundary[bnd] - self.v_under[bnd]), initial=0.0) > 1e-12:
            raise ValueError("subsolution does not match the boundary data")
        if check_margin:
            sub = subsolution_margin(grid, self.v_under, self.psi_tilde, spec)
            self.margin, self.psi_bar = sub.margin, sub.psi_bar
        else:
            fv = f_of_v(grid, self.v_under, spec)
            self.psi_bar = np.where(grid.interior, fv, self.psi_tilde)
            self.margin = float(np.min((self.psi_bar - self.psi_tilde)[grid.interior]))

    def rhs(self, v, stage: str, param: float) -> RHSField:
        if stage == "psi":
            return rhs_psi_family(v, self.v_under, param, self.psi_tilde, self.psi_bar)
        if stage == "xi":
            return rhs_xi_family(v, self.v_under, param, self.psi_tilde)
        raise ValueError(f"unknown stage {stage!r}")

    def residual(self, v, stage: str, param: float) -> np.ndarray:
        return residual_v(self.grid, v, self.rhs(v, stage, param), self.spec, self.v_boundary)

    def jacobian(self, v, stage: str, param: float):
        lin = linearize_v(self.grid, v, self.rhs(v, stage, param), self.spec)
        return assemble_jacobian(self.grid, lin)


def newton_solve(problem: CurvatureProblem, v0, stage: str, param: float,
                 config: SolverConfig | None = None) -> NewtonResult:
    """Damped Newton at fixed parameter.

    Backtracking halves the step until the residual 2-norm satisfies the
    Armijo condition and every equation node stays admissible.
    """
    cfg = config or SolverConfig()
    v = np.asarray(v0, dtype=float).copy()
    R = problem.residual(v, stage, param)
    tol = cfg.rtol * (1.0 + np.max(np.abs(problem.rhs(v, stage, param).values)))
    damped = False
    for it in range(cfg.max_newton + 1):
        sup = float(np.max(np.abs(R)))
        if sup <= tol:
            return NewtonResult(v, it, sup, damped)
        if it == cfg.max_newton:
            raise NewtonFailure("iteration cap", it, sup)
        J = problem.jacobian(v, stage, param)
        try:
            dv = spla.spsolve(J.tocsc(), -R)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise NewtonFailure(f"singular Jacobian ({exc})", it, sup) from exc
        # boundary rows are identity rows: take their solution exactly
        bnd = problem.grid.boundary
        dv[bnd] = -R[bnd]
        if not np.all(np.isfinite(dv)):
            raise NewtonFailure("singular Jacobian (non-finite direction)", it, sup)
        if np.max(np.abs(dv)) <= 1e-14:
            raise NewtonFailure("singular Jacobian (zero direction above tolerance)", it, sup)
        norm0 = np.linalg.norm(R)
        alpha = 1.0
        while True:
            if cfg.fail_at is not None and stage == cfg.fail_stage and param >= cfg.fail_at:
                raise NewtonFailure("line-search floor (injected)", it, sup)
            trial = v + alpha * dv
            try:
                Rt = problem.residual(trial, stage, param)
            except AdmissibilityError as exc:
                log.debug("step %.3g leaves the cone: %s", alpha, exc)
                Rt = None
            if Rt is not None and np.linalg.norm(Rt) <= (1.0 - cfg.armijo * alpha) * norm0:
                break
            alpha *= cfg.backtrack
            damped = True
            if alpha < cfg.alpha_min:
                raise NewtonFailure("line-search floor", it, sup)
        v, R = trial, Rt
    raise AssertionError("unreachable")


@dataclass
class MonitorRecord:
    stage: str
    param: float
    newton_iterations: int
    sup_abs_v: float
    sup_grad_v: float
    inf_u: float
    sup_u: float
    sup_grad_u: float
    bound_L: float
    min_cone_margin: float
    residual_norm: float
    min_v_minus_vunder: float
    comparison_ok: bool


@dataclass
class ContinuationState:
    stage: str
    param: float
    v: np.ndarray
    v_under: np.ndarray
    step: float
    monitors: list = field(default_factory=list)


def monitor_bounds(problem: CurvatureProblem, state: ContinuationState,
                   newton_iterations: int = 0) -> MonitorRecord:
    """Height, gradient, cone and comparison bookkeeping for one state.

    Violations of v >= v_under are flagged, never enforced.
    """
    grid = problem.grid
    v = state.v
    inner = grid.interior
    p = covariant_gradient(grid, v)
    P = covariant_hessian(grid, v)
    u = np.exp(v)
    gv = np.linalg.norm(p, axis=1)
    A, _, _ = curvature_matrix_v(v[inner], p[inner], P[inner])
    margin = float(cone_margins(problem.spec, np.linalg.eigvalsh(A)).min())
    try:
        res = float(np.max(np.abs(problem.residual(v, state.stage, state.param))))
    except AdmissibilityError:
        res = float("inf")
    gap = float(np.min(v[inner] - state.v_under[inner]))
    return MonitorRecord(
        stage=state.stage, param=float(state.param), newton_iterations=int(newton_iterations),
        sup_abs_v=float(np.max(np.abs(v))), sup_grad_v=float(gv.max()),
        inf_u=float(u.min()), sup_u=float(u.max()), sup_grad_u=float((u * gv).max()),
        bound_L=float(max(u.max(), 1.0 / u.min())), min_cone_margin=margin,
        residual_norm=res, min_v_minus_vunder=gap,
        comparison_ok=bool(gap >= -COMPARISON_TOL),
    )


@dataclass
class SolverReport:
    converged: bool
    stages_completed: list
    newton_iterations: list
    final_residual: float
    monitor_extrema: dict
    wall_clock: float
    failure: str | None = None
    splice_bitwise: bool | None = None
    comparison_violations: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ContinuationResult:
    v: np.ndarray
    report: SolverReport
    state: ContinuationState


def _extrema(records: list) -> dict:
    if not records:
        return {}
    return {
        "sup_u": max(r.sup_u for r in records),
        "inf_u": min(r.inf_u for r in records),
        "sup_grad_u": max(r.sup_grad_u for r in records),
        "bound_L": max(r.bound_L for r in records),
        "min_cone_margin": min(r.min_cone_margin for r in records),
        "min_v_minus_vunder": min(r.min_v_minus_vunder for r in records if r.param > 0 or r.stage == "xi")
        if any(r.param > 0 or r.stage == "xi" for r in records) else 0.0,
    }


def run_two_stage(problem: CurvatureProblem, config: SolverConfig | None = None,
                  resume: ContinuationState | None = None, checkpoint=None) -> ContinuationResult:
    """Continue from the subsolution (or ``resume``) to the target equation.

    On abort the last accepted state is returned (and written to
    ``checkpoint`` when a path is given); the report carries the diagnosis.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    if resume is None:
        state = ContinuationState("psi", 0.0, problem.v_under.copy(), problem.v_under.copy(),
                                  cfg.initial_step)
    else:
        # a checkpoint written on abort carries the collapsed step; restart it
        step = resume.step if resume.step >= cfg.min_step else cfg.initial_step
        state = ContinuationState(resume.stage, float(resume.param), resume.v.copy(),
                                  problem.v_under.copy(), float(step), list(resume.monitors))
    iterations: list = []
    stages_done: list = []
    splice = None
    failure = None

    if resume is None:
        res = newton_solve(problem, state.v, "psi", 0.0, cfg)
        state.v = res.v
        iterations.append(("psi", 0.0, res.iterations))
        state.monitors.append(monitor_bounds(problem, state, res.iterations))

    start = STAGES.index(state.stage)
    for stage in STAGES[start:]:
        if stage != state.stage:
            end_prev = problem.residual(state.v, state.stage, 1.0)
            begin = problem.residual(state.v, stage, 0.0)
            splice = bool(np.array_equal(end_prev, begin))
            state.stage, state.param = stage, 0.0
            state.step = cfg.initial_step
        while state.param < 1.0:
            trial = min(state.param + state.step, 1.0)
            try:
                res = newton_solve(problem, state.v, stage, trial, cfg)
            except NewtonFailure as exc:
                state.step *= 0.5
                log.info("%s step to %.6g failed (%s); step -> %.3g", stage, trial, exc.reason, state.step)
                if state.step < cfg.min_step:
                    failure = (f"stage {stage}: step to {trial:.6g} failed ({exc.reason}); "
                               f"continuation step fell below {cfg.min_step:g}")
                    break
                continue
            state.v = res.v
            state.param = trial
            iterations.append((stage, trial, res.iterations))
            rec = monitor_bounds(problem, state, res.iterations)
            state.monitors.append(rec)
            if not rec.comparison_ok:
                log.warning("comparison monitor: min(v - v_under) = %.3e at %s=%.4g",
                            rec.min_v_minus_vunder, stage, trial)
            if res.iterations <= cfg.fast_newton:
                state.step = min(state.step * cfg.grow, cfg.max_step)
        if failure:
            break
        stages_done.append(stage)

    converged = failure is None
    if converged:
        final = float(np.max(np.abs(problem.residual(state.v, "xi", 1.0))))
    else:
        final = state.monitors[-1].residual_norm if state.monitors else float("nan")
        if checkpoint is not None:
            write_checkpoint(state, problem.grid, checkpoint)
    report = SolverReport(
        converged=converged,
        stages_completed=stages_done,
        newton_iterations=iterations,
        final_residual=final,
        monitor_extrema=_extrema(state.monitors),
        wall_clock=time.perf_counter() - t0,
        failure=failure,
        splice_bitwise=splice,
        comparison_violations=sum(not r.comparison_ok for r in state.monitors),
    )
    return ContinuationResult(state.v, report, state)


def write_checkpoint(state: ContinuationState, grid: ChartGrid, path) -> None:
    """Header lines ``# key=value`` then ``node,v,v_under`` rows (repr floats)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# radcurv checkpoint\n")
        fh.write(f"# stage={state.stage}\n# param={float(state.param)!r}\n"
                 f"# step={float(state.step)!r}\n")
        fh.write(f"# ns={grid.ns}\n# nt={grid.nt}\n")
        fh.write("node,v,v_under\n")
        for k, (a, b) in enumerate(zip(state.v, state.v_under)):
            fh.write(f"{k},{float(a)!r},{float(b)!r}\n")


def read_checkpoint(path) -> tuple[ContinuationState, tuple[int, int]]:
    header = {}
    rows = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if "=" in line:
                    key, _, val = line[1:].strip().partition("=")
                    header[key] = val
            elif line and not line.startswith("node"):
                rows.append([float(x) for x in line.split(",")[1:]])
    data = np.array(rows)
    state = ContinuationState(header["stage"], float(header["param"]), data[:, 0], data[:, 1],
                              float(header["step"]))
    return state, (int(header["ns"]), int(header["nt"]))
