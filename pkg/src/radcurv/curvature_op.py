"""The curvature operator in logarithmic form and its homotopy right-hand sides.

With v = ln u = -ln rho the symmetric curvature matrix reads

    A = e^v / w * (I + gamma grad^2 v gamma),   w = sqrt(1 + |grad v|^2),
    gamma = I - grad v grad v^T / (w (1 + w)),

and the equation is F(A[v]) = target, with F = H_r^(1/r) of the eigenvalues
(every target lives on this degree-one scale).  Boundary rows are affine:
v minus its Dirichlet value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .sphere_chart import ChartGrid, covariant_gradient, covariant_hessian
from .symfun import AdmissibilityError, CurvatureSpec, cone_margins, matrix_F_derivative

GROWTH_EXPONENT = 3.0


class SubsolutionError(ValueError):
    """The subsolution does not strictly dominate the prescribed curvature."""


@dataclass
class RHSField:
    values: np.ndarray
    dv: np.ndarray
    stage: str
    param: float


@dataclass
class Linearization:
    Gij: np.ndarray
    Gs: np.ndarray
    Gv: np.ndarray
    rhs_v_derivative: np.ndarray


def curvature_matrix_v(v, p, P):
    """A[v] and the auxiliary (w, gamma) from v, grad v, grad^2 v (frame)."""
    v = np.asarray(v, dtype=float)
    n = p.shape[-1]
    eye = np.eye(n)
    w = np.sqrt(1.0 + np.sum(p**2, axis=-1))
    ww = w[..., None, None]
    gamma = eye - p[..., :, None] * p[..., None, :] / (ww * (1.0 + ww))
    A = (np.exp(v) / w)[..., None, None] * (eye + gamma @ P @ gamma)
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    return A, w, gamma


def operator_v(spec: CurvatureSpec, v, p, P, nodes=None):
    """F(A[v]) pointwise.  Raises AdmissibilityError naming the first bad node."""
    A, _, _ = curvature_matrix_v(v, p, P)
    lam = np.linalg.eigvalsh(A)
    margins = cone_margins(spec, lam)
    bad = ~np.all(margins > 0.0, axis=0)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        j = int(np.flatnonzero(margins[:, k] <= 0.0)[0])
        node = k if nodes is None else int(np.asarray(nodes)[k])
        raise AdmissibilityError(j + 1, margins[j, k], node)
    return (margins[-1] / spec.normalization) ** (1.0 / spec.r), lam


def linearize_pointwise(spec: CurvatureSpec, v, p, P):
    """Coefficients (Gij, Gs, Gv) of the derivative of F(A[v]) with respect to
    (grad^2 v, grad v, v)."""
    A, w, gamma = curvature_matrix_v(v, p, P)
    Fd = matrix_F_derivative(spec, A)
    n = p.shape[-1]
    eye = np.eye(n)
    c = np.exp(v) / w
    Gij = c[..., None, None] * (gamma @ Fd @ gamma)
    Gv = np.einsum("...ij,...ij->...", Fd, A)

    M = eye + gamma @ P @ gamma
    beta = 1.0 / (w * (1.0 + w))
    Gs = np.zeros(p.shape)
    pp = p[..., :, None] * p[..., None, :]
    for s in range(n):
        es = np.zeros(n)
        es[s] = 1.0
        sym = es[:, None] * p[..., None, :] + p[..., :, None] * es[None, :]
        dbeta = -(1.0 + 2.0 * w) * (p[..., s] / w) * beta**2
        dgamma = -beta[..., None, None] * sym - dbeta[..., None, None] * pp
        dM = dgamma @ P @ gamma + gamma @ P @ dgamma
        dc = -np.exp(v) * p[..., s] / w**3
        dA = dc[..., None, None] * M + c[..., None, None] * dM
        Gs[..., s] = np.einsum("...ij,...ij->...", Fd, dA)
    return Gij, Gs, Gv


def _derivatives(grid: ChartGrid, v):
    return covariant_gradient(grid, v), covariant_hessian(grid, v)


def f_of_v(grid: ChartGrid, v, spec: CurvatureSpec, nodes=None):
    """F(A[v]) at ``nodes`` (default: equation nodes), NaN elsewhere."""
    nodes = grid.interior if nodes is None else nodes
    p, P = _derivatives(grid, v)
    ids = np.arange(grid.size)[nodes]
    out = np.full(grid.size, np.nan)
    out[ids], _ = operator_v(spec, np.asarray(v)[ids], p[ids], P[ids], ids)
    return out


def residual_v(grid: ChartGrid, v, rhs: RHSField, spec: CurvatureSpec, v_boundary) -> np.ndarray:
    """F(A[v]) - rhs on equation nodes, v - v_boundary on the boundary ring."""
    v = np.asarray(v, dtype=float)
    res = np.empty(grid.size)
    inner = grid.interior
    fv = f_of_v(grid, v, spec)
    res[inner] = fv[inner] - rhs.values[inner]
    bnd = grid.boundary
    res[bnd] = v[bnd] - np.asarray(v_boundary)[bnd]
    return res


def linearize_v(grid: ChartGrid, v, rhs: RHSField, spec: CurvatureSpec) -> Linearization:
    """Pointwise linearization on equation nodes (zeros on the boundary)."""
    v = np.asarray(v, dtype=float)
    p, P = _derivatives(grid, v)
    ids = np.flatnonzero(grid.interior)
    operator_v(spec, v[ids], p[ids], P[ids], ids)
    Gij = np.zeros((grid.size, 2, 2))
    Gs = np.zeros((grid.size, 2))
    Gv = np.zeros(grid.size)
    Gij[ids], Gs[ids], Gv[ids] = linearize_pointwise(spec, v[ids], p[ids], P[ids])
    dv = np.zeros(grid.size)
    dv[ids] = rhs.dv[ids]
    return Linearization(Gij, Gs, Gv, dv)


def assemble_jacobian(grid: ChartGrid, lin: Linearization) -> sp.csr_matrix:
    """Sparse Jacobian of ``residual_v``; identity rows on the boundary."""
    d = sp.diags
    J = (d(lin.Gij[:, 0, 0]) @ grid.hess_ops[0, 0]
         + d(2.0 * lin.Gij[:, 0, 1]) @ grid.hess_ops[0, 1]
         + d(lin.Gij[:, 1, 1]) @ grid.hess_ops[1, 1]
         + d(lin.Gs[:, 0]) @ grid.grad_ops[0]
         + d(lin.Gs[:, 1]) @ grid.grad_ops[1]
         + d(lin.Gv - lin.rhs_v_derivative))
    keep = d(grid.interior.astype(float))
    return (keep @ J + d(grid.boundary.astype(float))).tocsr()


def rhs_psi_family(v, v_under, t: float, psi_tilde, psi_bar) -> RHSField:
    """e^{3(v - v_under)} (t psi + (1 - t) psi_bar)."""
    growth = np.exp(GROWTH_EXPONENT * (np.asarray(v) - v_under))
    values = growth * (t * psi_tilde + (1.0 - t) * psi_bar)
    return RHSField(values, GROWTH_EXPONENT * values, "psi", float(t))


def rhs_xi_family(v, v_under, s: float, psi_tilde) -> RHSField:
    """s psi + (1 - s) e^{3(v - v_under)} psi."""
    growth = np.exp(GROWTH_EXPONENT * (np.asarray(v) - v_under))
    tail = (1.0 - s) * (growth * psi_tilde)
    return RHSField(s * psi_tilde + tail, GROWTH_EXPONENT * tail, "xi", float(s))


def psi_family_upsilon(rho_bar, t: float, psi_tilde, psi_bar) -> Callable:
    """Upsilon(rho x) of the psi family as a function of the radius."""
    return lambda rho: (rho_bar / rho) ** 3 * (t * psi_tilde + (1.0 - t) * psi_bar)


def xi_family_upsilon(rho_bar, s: float, psi_tilde) -> Callable:
    return lambda rho: s * psi_tilde + (1.0 - s) * (rho_bar / rho) ** 3 * psi_tilde


def monotonicity_check(upsilon: Callable, rho_samples, tol: float = 1e-10) -> bool:
    """True iff d/drho (rho * Upsilon(rho)) <= tol at every sample.

    Fourth-order central differences with a step relative to each radius.
    """
    rho = np.asarray(rho_samples, dtype=float)
    h = 1e-3 * rho

    def q(r):
        return r * upsilon(r)

    deriv = (-q(rho + 2 * h) + 8 * q(rho + h) - 8 * q(rho - h) + q(rho - 2 * h)) / (12 * h)
    return bool(np.all(deriv <= tol))


@dataclass
class SubsolutionMargin:
    margin: float
    psi_bar: np.ndarray


def subsolution_margin(grid: ChartGrid, v_under, psi_tilde, spec: CurvatureSpec) -> SubsolutionMargin:
    """psi_bar = F(A[v_under]) and its minimum excess over psi_tilde.

    Boundary entries of ``psi_bar`` are not used by any equation row and are
    set to ``psi_tilde`` there.
    """
    psi_tilde = np.broadcast_to(np.asarray(psi_tilde, dtype=float), (grid.size,))
    fv = f_of_v(grid, v_under, spec)
    inner = grid.interior
    psi_bar = np.where(inner, fv, psi_tilde)
    margin = float(np.min(psi_bar[inner] - psi_tilde[inner]))
    if not margin > 0.0:
        raise SubsolutionError(
            f"subsolution margin {margin:.3e} is not positive: need F(A[v_under]) > psi_tilde")
    return SubsolutionMargin(margin, psi_bar)

