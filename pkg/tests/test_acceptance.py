"""Acceptance criteria, one test each, at the stated tolerances.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL ...`` line to the terminal.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from radcurv import properties as pr
from radcurv.config import ConfigError, load_config, parse_config
from radcurv.continuation import SolverConfig, read_checkpoint, run_two_stage
from radcurv.curvature_op import SubsolutionError
from radcurv.harness import build_problem, cmd_solve, exact_sphere_rho, read_csv_columns, solve_exact_case
from radcurv.radial_graph import graph_geometry
from radcurv.sphere_chart import DomainSpec, build_grid

ROOT = Path(__file__).resolve().parents[1]
SCALAR_CAP = ROOT / "configs" / "scalar_cap.ini"
THETA0 = np.pi / 3
PSI = 2**-0.5
LADDER = [(17, 32), (33, 64), (65, 128)]


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_1_exact_sphere_oracle(capsys):
    # validate the oracle before trusting it: rim value and H_2 = 1/2 through the geometry module
    c0, a = (1 - math.sqrt(5)) / 2, math.sqrt(2)
    rim = np.array([[math.sin(THETA0), 0.0, math.cos(THETA0)]])
    pole = np.array([[0.0, 0.0, 1.0]])
    rim_err = abs(exact_sphere_rho(rim, THETA0, PSI)[0] - 1.0)
    pole_err = abs(exact_sphere_rho(pole, THETA0, PSI)[0] - (c0 + a))
    h2_err = []
    for ns, nt in LADDER:
        grid = build_grid(DomainSpec("cap", theta0=THETA0), ns, nt)
        k = graph_geometry(grid, 1 / exact_sphere_rho(grid.points, THETA0, PSI)).kappa
        h2_err.append(np.abs(k[:, 0] * k[:, 1] - 0.5).max())
    oracle_ok = (rim_err < 1e-15 and pole_err < 1e-15 and h2_err[-1] < 5e-3
                 and h2_err[0] / h2_err[1] > 3 and h2_err[1] / h2_err[2] > 3)

    cfg = load_config(SCALAR_CAP)
    t0 = time.perf_counter()
    rows = [solve_exact_case(cfg, ns, nt) for ns, nt in LADDER]
    elapsed = time.perf_counter() - t0
    errs = [r["error"] for r in rows]
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(rows[i]["h"] / rows[i + 1]["h"])
              for i in range(2)]
    ok = (oracle_ok and all(r["converged"] for r in rows) and errs[-1] <= 5e-4
          and all(abs(p - 2) <= 0.3 for p in orders) and elapsed < 60)
    report(capsys, 1, ok, f"errors={[f'{e:.3e}' for e in errs]} orders={[f'{p:.2f}' for p in orders]} "
                          f"runtime={elapsed:.1f}s H2_err={h2_err[-1]:.1e}")


def test_2_scalar_curvature_sweep(capsys, tmp_path):
    details = []
    ok = True
    for R in (0.5, 1.0, 1.5):
        cfg = parse_config(SCALAR_CAP.read_text().replace("R = 1.0", f"R = {R}"))
        out = cmd_solve(cfg, tmp_path / f"R{R}", plots=False)
        rep = out.report
        mon = read_csv_columns(tmp_path / f"R{R}" / "monitor.csv")
        worst = float(np.min(mon["min_v_minus_vunder"][mon["param"] > 0]))
        ok &= (out.exit_code == 0 and rep["final_residual"] <= 1e-9
               and rep["boundary_trace_max_deviation"] <= 1e-12 and worst >= -1e-10)
        details.append(f"R={R}: exit={out.exit_code} res={rep['final_residual']:.1e} "
                       f"trace={rep['boundary_trace_max_deviation']:.1e} min(v-v_)={worst:.1e}")
    report(capsys, 2, ok, "; ".join(details))


def test_3_identity_suite(capsys):
    rng = np.random.default_rng(3)
    grid = pr.default_grid()
    fields = pr.random_admissible_fields(grid, rng, 100)
    rows = pr.check_gamma_identities(grid, fields)[:2]
    graph = pr.check_graph_curvature(grid, fields)
    rows.append(graph[1])
    cone = pr.check_cone_samples(rng, 10_000)[0]
    rows.append(cone)
    # sum kappa > 0 at every node, including the rim
    mean_ok = all(np.all(graph_geometry(grid, u).kappa.sum(axis=1) > 0) for u in fields)
    ok = all(r.passed for r in rows) and mean_ok and cone.samples == 10_000 and len(fields) == 100
    report(capsys, 3, ok, " ".join(f"[{r.name}: {r.max_violation:.1e}]" for r in rows))


def test_4_jacobian_suite(capsys):
    rng = np.random.default_rng(4)
    fd, ell = pr.check_jacobian(pr.default_grid(), rng, states=10, directions=20)
    ok = fd.passed and ell.passed and fd.samples == 200
    report(capsys, 4, ok, f"max rel err={fd.max_violation:.2e} over {fd.samples} directions; "
                          f"ellipticity {'ok' if ell.passed else 'violated'}")


def test_5_appendix_suite(capsys):
    row = pr.check_appendix(np.random.default_rng(5), 10_000)
    ok = row.passed and row.samples == 10_000
    report(capsys, 5, ok, f"failures={int(row.max_violation)} of {row.samples} (n in 3,4,5; K=2)")


def test_6_family_splice(capsys):
    splice, mono = pr.check_splice_and_monotonicity(pr.default_grid(), np.random.default_rng(6), states=10)
    ok = splice.passed and mono.passed and splice.samples == 10
    report(capsys, 6, ok, f"splice mismatches={int(splice.max_violation)}/10, "
                          f"monotonicity failures={int(mono.max_violation)}/3")


def test_7_robustness(capsys, tmp_path):
    text = SCALAR_CAP.read_text()
    # out-of-range R: rejected at parse time
    range_ok = True
    for R in (0.0, 2.0, 2.5):
        with pytest.raises(ConfigError) as err:
            parse_config(text.replace("R = 1.0", f"R = {R}"))
        range_ok &= "0 < R < n(n-1) = 2" in str(err.value) and err.value.line is not None
    # zero margin: rejected before the first continuation step
    cfg = load_config(SCALAR_CAP).with_grid(17, 32)
    with pytest.raises(SubsolutionError):
        build_problem(replace(cfg, mode="f", R=None, psi_expr="1.0"))
    # induced floor, clean abort, resume to the same answer
    problem = build_problem(cfg)
    ref = run_two_stage(problem)
    ck = tmp_path / "checkpoint.csv"
    bad = run_two_stage(problem, SolverConfig(fail_at=0.35, fail_stage="xi"), checkpoint=ck)
    state, _ = read_checkpoint(ck)
    resumed = run_two_stage(problem, resume=state)
    diff = float(np.abs(resumed.v - ref.v).max())
    ok = (range_ok and not bad.report.converged and "line-search floor" in bad.report.failure
          and resumed.report.converged and diff < 1e-9)
    report(capsys, 7, ok, f"R range rejected={range_ok}; zero margin -> SubsolutionError; "
                          f"abort='{bad.report.failure}'; resume diff={diff:.1e}")
