import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radcurv.curvature_op import (GROWTH_EXPONENT, SubsolutionError, assemble_jacobian,
                                  curvature_matrix_v, f_of_v, linearize_pointwise, linearize_v,
                                  monotonicity_check, psi_family_upsilon, residual_v,
                                  rhs_psi_family, rhs_xi_family, subsolution_margin,
                                  xi_family_upsilon)
from radcurv.harness import exact_sphere_rho
from radcurv.properties import random_admissible_u, random_smooth_field
from radcurv.radial_graph import geometry_from_derivatives
from radcurv.sphere_chart import DomainSpec, build_grid, covariant_gradient, covariant_hessian
from radcurv.symfun import AdmissibilityError, CurvatureSpec

SPEC = CurvatureSpec(2, 2)
ROOT_HALF = 2**-0.5


def const_rhs(grid, value):
    vals = np.full(grid.size, float(value))
    return rhs_xi_family(np.zeros(grid.size), np.zeros(grid.size), 1.0, vals)


# -- residual ------------------------------------------------------------------------------

def test_residual_unit_sphere(grid17):
    v = np.zeros(grid17.size)
    r = residual_v(grid17, v, const_rhs(grid17, 1.0), SPEC, v)
    assert np.abs(r).max() < 1e-12


def test_residual_scaled_sphere(grid17):
    c = 1.8
    v = np.full(grid17.size, np.log(c))
    r = residual_v(grid17, v, const_rhs(grid17, c), SPEC, v)
    assert np.abs(r).max() < 1e-11


def test_residual_boundary_rows(grid17):
    v = np.zeros(grid17.size)
    vb = v.copy()
    vb[grid17.boundary] = -np.log(1.3)
    r = residual_v(grid17, v, const_rhs(grid17, 1.0), SPEC, vb)
    assert np.allclose(r[grid17.boundary], np.log(1.3))


def test_residual_exact_sphere_second_order():
    errs = []
    for ns, nt in ((17, 32), (33, 64), (65, 128)):
        g = build_grid(DomainSpec("cap", theta0=np.pi / 3), ns, nt)
        v = -np.log(exact_sphere_rho(g.points, np.pi / 3, ROOT_HALF))
        r = residual_v(g, v, const_rhs(g, ROOT_HALF), SPEC, v)
        errs.append(np.abs(r).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_residual_inadmissible_names_node(grid17):
    x, y, _ = grid17.points.T
    v = np.log(1.0 + 0.6 * np.exp(-((x - 0.3) ** 2 + y**2) / 0.01))
    with pytest.raises(AdmissibilityError) as err:
        residual_v(grid17, v, const_rhs(grid17, 1.0), SPEC, v)
    assert err.value.node is not None and err.value.index in (1, 2)


def test_v_form_matches_u_form(grid17, rng):
    """A[v] equals gamma^ h gamma^ computed from u = e^v."""
    u = random_admissible_u(grid17, rng)
    v = np.log(u)
    A_v, _, _ = curvature_matrix_v(v, covariant_gradient(grid17, v), covariant_hessian(grid17, v))
    geo = geometry_from_derivatives(u, covariant_gradient(grid17, u), covariant_hessian(grid17, u))
    # the chain rule holds for the exact derivatives; discretely they agree to O(h^2)
    assert np.abs(A_v - geo.A)[grid17.s < 0.9].max() < 5e-2
    p = rng.normal(size=(50, 2))
    P = rng.normal(size=(50, 2, 2))
    P = P + np.swapaxes(P, 1, 2)
    v0 = rng.normal(size=50) * 0.3
    u0 = np.exp(v0)
    A1, _, _ = curvature_matrix_v(v0, p, P)
    du = u0[:, None] * p
    Hu = u0[:, None, None] * (P + p[:, :, None] * p[:, None, :])
    assert np.abs(A1 - geometry_from_derivatives(u0, du, Hu).A).max() < 1e-12


# -- linearization -------------------------------------------------------------------------

def test_linearization_at_unit_sphere():
    Gij, Gs, Gv = linearize_pointwise(SPEC, np.zeros(3), np.zeros((3, 2)), np.zeros((3, 2, 2)))
    assert np.allclose(Gij, 0.5 * np.eye(2))
    assert np.allclose(Gs, 0.0)
    assert np.allclose(Gv, 1.0)


@given(st.integers(0, 2**31))
def test_pointwise_linearization_fd(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1) * 0.3
    p = rng.normal(size=(1, 2)) * 0.5
    P = np.diag([0.2, 0.1])[None] + 0.05 * rng.normal(size=(1, 2, 2))
    P = 0.5 * (P + np.swapaxes(P, 1, 2))

    def F(v, p, P):
        A, _, _ = curvature_matrix_v(v, p, P)
        lam = np.linalg.eigvalsh(A)
        return np.sqrt(lam[..., 0] * lam[..., 1])

    Gij, Gs, Gv = linearize_pointwise(SPEC, v, p, P)
    eps = 1e-6
    assert Gv[0] == pytest.approx(((F(v + eps, p, P) - F(v - eps, p, P)) / (2 * eps))[0], rel=1e-6)
    for s in range(2):
        e = np.zeros((1, 2))
        e[0, s] = eps
        fd = (F(v, p + e, P) - F(v, p - e, P)) / (2 * eps)
        assert Gs[0, s] == pytest.approx(fd[0], rel=1e-6, abs=1e-9)
    E = np.zeros((1, 2, 2))
    E[0, 0, 1] = E[0, 1, 0] = eps
    fd = (F(v, p, P + E) - F(v, p, P - E)) / (2 * eps)
    assert 2 * Gij[0, 0, 1] == pytest.approx(fd[0], rel=1e-6, abs=1e-9)
    assert np.linalg.eigvalsh(Gij[0]).min() > 0


def test_jacobian_directional_fd(grid17, rng):
    eps = 1e-5
    for _ in range(3):
        v = np.log(random_admissible_u(grid17, rng))
        vu = v - 0.02
        psit = np.full(grid17.size, 0.6)
        psib = np.full(grid17.size, 0.9)
        for stage, param in (("psi", 0.4), ("xi", 0.7)):
            def rhs(w):
                if stage == "psi":
                    return rhs_psi_family(w, vu, param, psit, psib)
                return rhs_xi_family(w, vu, param, psit)
            J = assemble_jacobian(grid17, linearize_v(grid17, v, rhs(v), SPEC))
            for _ in range(5):
                d = random_smooth_field(grid17, rng, 1.0)
                fd = (residual_v(grid17, v + eps * d, rhs(v + eps * d), SPEC, v)
                      - residual_v(grid17, v - eps * d, rhs(v - eps * d), SPEC, v)) / (2 * eps)
                lin = J @ d
                assert np.linalg.norm(lin - fd) <= 1e-6 * np.linalg.norm(lin)


def test_jacobian_boundary_rows_identity(grid17):
    v = np.zeros(grid17.size)
    J = assemble_jacobian(grid17, linearize_v(grid17, v, const_rhs(grid17, 0.7), SPEC)).toarray()
    b = np.flatnonzero(grid17.boundary)
    assert np.array_equal(J[b], np.eye(grid17.size)[b])


def test_rhs_derivative_sign_structure(grid17, rng):
    """At a solved psi-family state H_v - d(rhs)/dv = f - 3 f < 0."""
    v = np.log(random_admissible_u(grid17, rng))
    fv = f_of_v(grid17, v, SPEC)
    psi = np.where(grid17.interior, fv, 1.0)
    rhs = rhs_psi_family(v, v, 1.0, psi, psi)
    lin = linearize_v(grid17, v, rhs, SPEC)
    inner = grid17.interior
    assert np.allclose(lin.Gv[inner], fv[inner], rtol=1e-12)  # Euler: H_v = F
    assert np.all((lin.Gv - lin.rhs_v_derivative)[inner] < 0)


# -- homotopy families ---------------------------------------------------------------------

def test_psi_family_examples(rng):
    vu = rng.normal(size=20) * 0.1
    psit = rng.uniform(0.3, 0.6, 20)
    psib = psit + 0.3
    assert np.array_equal(rhs_psi_family(vu, vu, 0.0, psit, psib).values, psib)
    assert np.array_equal(rhs_psi_family(vu, vu, 1.0, psit, psib).values, psit)
    v = vu + rng.uniform(0, 0.2, 20)
    r = rhs_psi_family(v, vu, 0.3, psit, psib)
    assert np.allclose(r.dv, GROWTH_EXPONENT * r.values)
    assert r.stage == "psi" and r.param == 0.3


def test_xi_family_examples(rng):
    vu = rng.normal(size=20) * 0.1
    psit = rng.uniform(0.3, 0.6, 20)
    v = vu + rng.uniform(0.01, 0.2, 20)
    assert np.array_equal(rhs_xi_family(v, vu, 1.0, psit).values, psit)
    assert np.allclose(rhs_xi_family(vu, vu, 0.0, psit).values, psit)
    s = 0.4
    assert np.all(rhs_xi_family(v, vu, s, psit).values > s * psit)
    r = rhs_xi_family(v, vu, s, psit)
    assert np.allclose(r.dv, GROWTH_EXPONENT * (r.values - s * psit))


@given(st.integers(0, 2**31))
def test_family_splice_bitwise(seed):
    rng = np.random.default_rng(seed)
    n = 64
    v, vu = rng.normal(size=n), rng.normal(size=n)
    psit, psib = rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n)
    a = rhs_psi_family(v, vu, 1.0, psit, psib)
    b = rhs_xi_family(v, vu, 0.0, psit)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.dv, b.dv)


def test_monotonicity_psi_family():
    rho_bar = np.array([1.0, 1.2, 0.9])
    radii = np.linspace(0.3, 1.0, 12)[:, None] * rho_bar
    for t in (0.0, 0.5, 1.0):
        assert monotonicity_check(psi_family_upsilon(rho_bar, t, 0.7, 1.0), radii)


def test_monotonicity_xi_family_per_s():
    rho_bar = 1.0
    psi = 0.7
    radii = np.linspace(0.5, 1.0, 20)
    # d/drho [rho Xi] = s psi - 2 (1 - s) rho_bar^3 rho^-3 psi; worst at rho = rho_bar
    for s in (0.0, 0.3, 0.6):
        assert monotonicity_check(xi_family_upsilon(rho_bar, s, psi), radii) == (s <= 2 * (1 - s))
    assert not monotonicity_check(xi_family_upsilon(rho_bar, 1.0, psi), radii)
    assert not monotonicity_check(lambda r: np.full_like(r, 0.5), radii)


# -- subsolution margin --------------------------------------------------------------------

def test_margin_unit_sphere(grid17):
    m = subsolution_margin(grid17, np.zeros(grid17.size), ROOT_HALF, SPEC)
    assert m.margin == pytest.approx(1 - ROOT_HALF, abs=1e-11)
    assert np.allclose(m.psi_bar[grid17.interior], 1.0, atol=1e-11)


def test_margin_zero_rejected(grid17):
    with pytest.raises(SubsolutionError):
        subsolution_margin(grid17, np.zeros(grid17.size), 1.0, SPEC)


def test_margin_exact_sphere_rejected(grid33):
    """The sphere of f = 1/sqrt(2) has zero margin against that target; the
    discrete margin is O(h^2) and not positive."""
    v = -np.log(exact_sphere_rho(grid33.points, np.pi / 3, ROOT_HALF))
    fv = f_of_v(grid33, v, SPEC)
    assert np.abs(fv[grid33.interior] - ROOT_HALF).max() < 1e-2
    with pytest.raises(SubsolutionError):
        subsolution_margin(grid33, v, ROOT_HALF, SPEC)


def test_margin_inadmissible(grid17):
    x, y, _ = grid17.points.T
    v = np.log(1.0 + 0.6 * np.exp(-((x - 0.3) ** 2 + y**2) / 0.01))
    with pytest.raises(AdmissibilityError):
        subsolution_margin(grid17, v, 0.5, SPEC)
