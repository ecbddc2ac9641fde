"""Randomized property suite behind ``radcurv check-properties``.

Every check returns a :class:`PropertyRow` with the largest violation seen;
``passed`` compares it with the stated tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symfun as sf
from .curvature_op import (assemble_jacobian, f_of_v, linearize_v, monotonicity_check,
                           psi_family_upsilon, residual_v, rhs_psi_family, rhs_xi_family)
from .radial_graph import admissibility, geometry_from_derivatives, graph_geometry
from .sphere_chart import (ChartGrid, DomainSpec, build_grid, covariant_gradient,
                           covariant_hessian)

SPEC = sf.CurvatureSpec(2, 2)


@dataclass
class PropertyRow:
    name: str
    max_violation: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_violation) and self.max_violation <= self.tolerance)


def default_grid() -> ChartGrid:
    return build_grid(DomainSpec("cap", theta0=np.pi / 3), 17, 32)


def random_smooth_field(grid: ChartGrid, rng: np.random.Generator, amplitude: float) -> np.ndarray:
    """Random cubic polynomial in the ambient coordinates, restricted to the grid."""
    x, y, z = grid.points.T
    basis = [x, y, z, x * x, x * y, y * y, x * z, y * z, x**3, x * x * y, x * y * y, y**3]
    coef = rng.normal(size=len(basis))
    field = sum(c * b for c, b in zip(coef, basis))
    return amplitude * field / np.max(np.abs(field))


def random_admissible_u(grid: ChartGrid, rng: np.random.Generator, spec=SPEC) -> np.ndarray:
    """u = c (1 + eps * smooth) with kappa in Gamma_r at every node."""
    while True:
        u = rng.uniform(0.5, 2.0) * (1.0 + random_smooth_field(grid, rng, rng.uniform(0.0, 0.3)))
        if np.all(u > 0) and admissibility(graph_geometry(grid, u), spec).all_admissible:
            return u


def random_admissible_fields(grid, rng, count, spec=SPEC):
    return [random_admissible_u(grid, rng, spec) for _ in range(count)]


def check_gamma_identities(grid, fields, h_sign=1.0):
    sq = inv = sim = 0.0
    for u in fields:
        g = geometry_from_derivatives(u, covariant_gradient(grid, u), covariant_hessian(grid, u),
                                      h_sign=h_sign)
        sq = max(sq, np.abs(g.gamma_down @ g.gamma_down - g.g).max())
        inv = max(inv, np.abs(g.gamma_up @ g.gamma_down - np.eye(2)).max())
        weing = np.linalg.solve(g.g, g.h)
        ev = np.sort(np.linalg.eigvals(weing).real, axis=-1)
        sim = max(sim, np.abs(ev - g.kappa).max())
    n = len(fields)
    return [PropertyRow("gamma_down^2 = g", sq, 1e-10, n),
            PropertyRow("gamma_up gamma_down = I", inv, 1e-10, n),
            PropertyRow("eig A = eig g^-1 h", sim, 1e-9, n)]


def check_graph_curvature(grid, fields, h_sign=1.0, spec=SPEC):
    """Euler identity and positive mean curvature on graph curvatures."""
    euler = mean = 0.0
    for u in fields:
        g = geometry_from_derivatives(u, covariant_gradient(grid, u), covariant_hessian(grid, u),
                                      h_sign=h_sign)
        k = g.kappa[grid.interior]
        mean = max(mean, float(np.max(-np.sum(k, -1))) if np.any(np.sum(k, -1) <= 0) else 0.0)
        if not np.all(sf.cone_contains(spec, k)):
            euler = np.inf  # F is undefined outside the cone
            continue
        fv = sf.f_value(spec, k)
        euler = max(euler, (np.abs(np.sum(sf.f_gradient(spec, k) * k, -1) - fv) / (1 + fv)).max())
    return [PropertyRow("Euler identity on graphs", euler, 1e-12, len(fields)),
            PropertyRow("sum kappa > 0 on graphs", mean, 0.0, len(fields))]


def check_scaling(grid, fields):
    worst = 0.0
    for u in fields:
        k1 = graph_geometry(grid, u).kappa
        k2 = graph_geometry(grid, 1.7 * u).kappa
        worst = max(worst, np.abs(k2 - 1.7 * k1).max() / (1 + np.abs(k1).max()))
    return PropertyRow("kappa[c u] = c kappa[u]", worst, 1e-10, len(fields))


def check_cone_samples(rng, count, spec=SPEC):
    lam = sf.sample_gamma_psi(spec, rng, count, 0.2, 5.0)
    fv = sf.f_value(spec, lam)
    fg = sf.f_gradient(spec, lam)
    euler = np.max(np.abs(np.sum(fg * lam, -1) - fv) / (1 + np.abs(fv)))
    pos = max(0.0, -float(min(fv.min(), fg.min(), np.sum(lam, -1).min())))
    # concavity along random chords
    mu = lam[rng.permutation(count)]
    s = rng.uniform(size=count)
    mid = s[:, None] * lam + (1 - s[:, None]) * mu
    conc = np.max(s * fv + (1 - s) * sf.f_value(spec, mu) - sf.f_value(spec, mid))
    # nesting: membership of higher order implies lower orders
    cloud = rng.normal(size=(count, 4))
    spec4 = sf.CurvatureSpec(4, 4)
    nest = 0.0
    for r in range(2, 5):
        inner = sf.cone_contains(sf.CurvatureSpec(4, r), cloud)
        for q in range(1, r):
            lower = np.all(sf.cone_margins(spec4, cloud, q) > 0, axis=0)
            nest += float(np.sum(inner & ~lower))
    return [PropertyRow("Euler identity on cone samples", euler, 1e-12, count),
            PropertyRow("f, f_i, sum lambda > 0", pos, 0.0, count),
            PropertyRow("concavity of f", max(conc, 0.0), 1e-12, count),
            PropertyRow("cone nesting", nest, 0.0, count)]


def check_orthogonal_invariance(rng, count, n=3, r=2):
    spec = sf.CurvatureSpec(n, r)
    lam = sf.sample_gamma_psi(spec, rng, count, 0.5, 2.0)
    Q0 = sf.random_orthogonal(rng, n, count)
    A = np.einsum("kij,kj,klj->kil", Q0, lam, Q0)
    Q = sf.random_orthogonal(rng, n, count)
    lhs = sf.matrix_F_derivative(spec, Q @ A @ np.swapaxes(Q, 1, 2))
    rhs = Q @ sf.matrix_F_derivative(spec, A) @ np.swapaxes(Q, 1, 2)
    return PropertyRow("F^ij(Q A Q^T) = Q F^ij(A) Q^T", float(np.abs(lhs - rhs).max()), 1e-10, count)


def check_appendix(rng, count, ns=(3, 4, 5), K=2.0):
    """Rejection-sample orthogonal matrices with a column nearly normal to the
    first n-1 coordinates and test the lower bound on the other columns."""
    failures = 0
    done = 0
    for idx, n in enumerate(ns):
        per = count // len(ns) + (idx < count % len(ns))
        got = 0
        while got < per:
            P = sf.random_orthogonal(rng, n, 4096)
            mass = np.sum(P[:, :-1, :] ** 2, axis=1)
            hit = np.flatnonzero((mass < K**-2).any(axis=1))
            for k in hit[: per - got]:
                gamma = int(np.argmax(mass[k] < K**-2))
                failures += not sf.appendix_cofactor_check(P[k], K, gamma)
                got += 1
        done += got
    return PropertyRow("appendix cofactor bound", float(failures), 0.0, done)


def check_ivochkina(rng, count, psi0=0.5, psi1=2.0, spec=sf.CurvatureSpec(3, 2)):
    """Ratio bounded on two independent sample sets of the slice."""
    maxima = []
    for _ in range(2):
        lam = sf.sample_gamma_psi(spec, rng, count, psi0, psi1)
        worst = 0.0
        for row in lam:
            for j in range(spec.n):
                worst = max(worst, sf.ivochkina_ratio(spec, row, j, psi0, psi1))
        maxima.append(worst)
    spread = max(maxima) / min(maxima)
    # finite and stable to within a factor of four across resamples
    return PropertyRow("Ivochkina ratio bounded", 0.0 if np.isfinite(spread) and spread < 4 else np.inf,
                       0.0, 2 * count)


def smooth_direction(grid, rng):
    """Smooth perturbation (including rim values): finite differences of a
    nodal noise field are dominated by truncation, not by linearization error."""
    return random_smooth_field(grid, rng, 1.0)


def check_jacobian(grid, rng, states=10, directions=20, eps=1e-5, spec=SPEC):
    worst_rel = 0.0
    min_eig = np.inf
    for _ in range(states):
        v = np.log(random_admissible_u(grid, rng, spec))
        vu = v - np.abs(random_smooth_field(grid, rng, 0.05))
        t = rng.uniform()
        psit = np.full(grid.size, 0.5)
        psib = np.full(grid.size, 0.9)
        stage = rng.choice(["psi", "xi"])

        def rhs(vv):
            if stage == "psi":
                return rhs_psi_family(vv, vu, t, psit, psib)
            return rhs_xi_family(vv, vu, t, psit)

        lin = linearize_v(grid, v, rhs(v), spec)
        J = assemble_jacobian(grid, lin)
        min_eig = min(min_eig, np.linalg.eigvalsh(lin.Gij[grid.interior]).min())
        vb = v.copy()
        for _ in range(directions):
            d = smooth_direction(grid, rng)
            fd = (residual_v(grid, v + eps * d, rhs(v + eps * d), spec, vb)
                  - residual_v(grid, v - eps * d, rhs(v - eps * d), spec, vb)) / (2 * eps)
            lin_act = J @ d
            worst_rel = max(worst_rel, np.linalg.norm(lin_act - fd) / np.linalg.norm(lin_act))
    return [PropertyRow("Jacobian vs central differences", worst_rel, 1e-6, states * directions),
            PropertyRow("ellipticity (min eig Gij > 0)", 0.0 if min_eig > 0 else -min_eig, 0.0, states)]


def check_splice_and_monotonicity(grid, rng, states=10, spec=SPEC):
    mismatches = 0
    for _ in range(states):
        v = np.log(random_admissible_u(grid, rng, spec))
        vu = v - np.abs(random_smooth_field(grid, rng, 0.1))
        psit = rng.uniform(0.3, 0.9) * np.ones(grid.size)
        psib = f_of_v(grid, vu, spec) if sf.cone_contains(spec, graph_geometry(grid, np.exp(vu)).kappa[grid.interior]).all() else psit + 0.2
        psib = np.where(np.isfinite(psib), psib, psit)
        a = rhs_psi_family(v, vu, 1.0, psit, psib).values
        b = rhs_xi_family(v, vu, 0.0, psit).values
        mismatches += not np.array_equal(a, b)
    rho_bar = np.ones(grid.size)
    samples = np.linspace(0.3, 1.0, 15)[:, None] * rho_bar
    mono_fail = 0
    for t in (0.0, 0.5, 1.0):
        up = psi_family_upsilon(rho_bar, t, np.full(grid.size, 0.7), np.ones(grid.size))
        mono_fail += not monotonicity_check(up, samples)
    return [PropertyRow("splice psi(t=1) == xi(s=0) bitwise", float(mismatches), 0.0, states),
            PropertyRow("psi-family monotone in rho", float(mono_fail), 0.0, 3)]


def check_frame(grid):
    err = np.abs(grid.frame @ grid.metric @ np.swapaxes(grid.frame, 1, 2) - np.eye(2)).max()
    return PropertyRow("E g E^T = I", float(err), 1e-12, grid.size)


def check_comparison_structure(grid, rng, count=10, spec=SPEC):
    """At a solved state (rhs := F(A[v])), H_v - d(rhs)/dv = F - 3 F < 0."""
    worst = -np.inf
    for _ in range(count):
        v = np.log(random_admissible_u(grid, rng, spec))
        fv = f_of_v(grid, v, spec)
        vu = v - 0.01
        psit = np.where(grid.interior, fv / np.exp(3 * 0.01), 1.0)
        rhs = rhs_psi_family(v, vu, 1.0, psit, psit)
        lin = linearize_v(grid, v, rhs, spec)
        gap = (lin.Gv - lin.rhs_v_derivative)[grid.interior]
        worst = max(worst, gap.max())
    return PropertyRow("H_v - Psi_v <= 0", max(worst, 0.0), 0.0, count)


def run_suite(seed: int = 0, scale: float = 1.0, h_sign: float = 1.0) -> list[PropertyRow]:
    """All property checks; ``scale`` shrinks the sample counts for quick runs.

    ``h_sign = -1`` injects a sign fault into the second fundamental form.
    """
    rng = np.random.default_rng(seed)
    grid = default_grid()
    nf = max(2, int(100 * scale))
    fields = random_admissible_fields(grid, rng, nf)
    rows = [check_frame(grid)]
    rows += check_gamma_identities(grid, fields, h_sign)
    rows += check_graph_curvature(grid, fields, h_sign)
    rows.append(check_scaling(grid, fields[:10]))
    rows += check_cone_samples(rng, max(100, int(10_000 * scale)))
    rows.append(check_orthogonal_invariance(rng, max(50, int(1000 * scale))))
    rows.append(check_appendix(rng, max(30, int(10_000 * scale))))
    rows.append(check_ivochkina(rng, max(50, int(500 * scale))))
    rows += check_jacobian(grid, rng, states=max(2, int(10 * scale)), directions=max(4, int(20 * scale)))
    rows += check_splice_and_monotonicity(grid, rng)
    rows.append(check_comparison_structure(grid, rng))
    return rows
