"""Gnomonic chart of the upper hemisphere and boundary-fitted polar grids.

The chart sends a point p of the open upper hemisphere to (p_x/p_z, p_y/p_z).
A star-shaped domain is described in chart polar coordinates by its boundary
radius s_b(theta); grid nodes sit at chart points s * s_b(theta) * (cos, sin)
with s uniform on [0, 1] and theta periodic.  The pole (s = 0) is one node.

Covariant derivatives are assembled once per grid as sparse matrices acting
on node values and returning components in an orthonormal frame
e_i = E_ik d/dX_k, where E is the symmetric square root of the inverse chart
metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np
import scipy.sparse as sp

HEMISPHERE_MARGIN = 1e-3


def gnomonic_forward(p) -> np.ndarray:
    """Central projection of upper-hemisphere points onto the plane z = 1."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0.0):
        raise ValueError("point is not in the open upper hemisphere")
    return p[..., :2] / z[..., None]


def gnomonic_inverse(xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    q = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def chart_metric(xy) -> np.ndarray:
    """Round metric pulled back by the gnomonic chart."""
    xy = np.asarray(xy, dtype=float)
    q = 1.0 + np.sum(xy**2, axis=-1)
    eye = np.eye(2)
    return (eye * q[..., None, None] - xy[..., :, None] * xy[..., None, :]) / (q**2)[..., None, None]


def chart_christoffel(xy) -> np.ndarray:
    """Gamma[k, i, j] of the chart metric; the chart is projectively flat,
    so Gamma^k_ij = -(x_i delta_jk + x_j delta_ik) / (1 + |x|^2)."""
    xy = np.asarray(xy, dtype=float)
    q = 1.0 + np.sum(xy**2, axis=-1)
    eye = np.eye(2)
    gam = -(np.einsum("...i,jk->...kij", xy, eye) + np.einsum("...j,ik->...kij", xy, eye))
    return gam / q[..., None, None, None]


def chart_frame(xy) -> np.ndarray:
    """Symmetric inverse square root of the chart metric (E g E^T = I)."""
    xy = np.asarray(xy, dtype=float)
    r2 = np.sum(xy**2, axis=-1)
    q = 1.0 + r2
    sq = np.sqrt(q)
    r = np.sqrt(r2)
    unit = np.where(r[..., None] > 0, xy / np.where(r > 0, r, 1.0)[..., None], 0.0)
    outer = unit[..., :, None] * unit[..., None, :]
    return sq[..., None, None] * np.eye(2) + (q - sq)[..., None, None] * outer


def _chart_tangents(xy) -> np.ndarray:
    """dP/dX_k in ambient space for the inverse chart P; shape (..., 2, 3)."""
    xy = np.asarray(xy, dtype=float)
    q = 1.0 + np.sum(xy**2, axis=-1)
    sq = np.sqrt(q)
    pts = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
    out = np.zeros(xy.shape[:-1] + (2, 3))
    for k in range(2):
        out[..., k, k] = 1.0 / sq
        out[..., k, :] -= pts * (xy[..., k] / (q * sq))[..., None]
    return out


@dataclass(frozen=True)
class DomainSpec:
    """Star-shaped domain in the gnomonic chart.

    ``kind == "cap"`` is the geodesic disc of radius ``theta0`` about the pole.
    ``kind == "star"`` uses ``coefficients = (a0, a1, b1, a2, b2, ...)`` for
    s_b(theta) = a0 + sum_k a_k cos(k theta) + b_k sin(k theta).
    """

    kind: str
    theta0: float | None = None
    coefficients: tuple = ()

    def __post_init__(self):
        if self.kind == "cap":
            if self.theta0 is None or not 0.0 < self.theta0 < pi / 2 - HEMISPHERE_MARGIN:
                raise ValueError(
                    f"cap radius must lie in (0, pi/2 - {HEMISPHERE_MARGIN}), got {self.theta0}")
        elif self.kind == "star":
            c = tuple(float(x) for x in self.coefficients)
            if len(c) == 0 or len(c) % 2 == 0:
                raise ValueError("star coefficients must be (a0, a1, b1, ..., ak, bk)")
            object.__setattr__(self, "coefficients", c)
            theta = np.linspace(0.0, 2 * pi, 4096, endpoint=False)
            rad = self.boundary_radius(theta)[0]
            if np.any(rad <= 0.0):
                raise ValueError("boundary radius must stay positive (star-shaped domain)")
            if np.max(rad) >= np.tan(pi / 2 - HEMISPHERE_MARGIN):
                raise ValueError("domain closure leaves the open hemisphere")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    def boundary_radius(self, theta):
        """Chart radius s_b and its first two theta-derivatives."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "cap":
            t = np.tan(self.theta0)
            return np.full_like(theta, t), np.zeros_like(theta), np.zeros_like(theta)
        c = self.coefficients
        r0 = np.full_like(theta, c[0])
        r1 = np.zeros_like(theta)
        r2 = np.zeros_like(theta)
        for k in range(1, (len(c) - 1) // 2 + 1):
            a, b = c[2 * k - 1], c[2 * k]
            cs, sn = np.cos(k * theta), np.sin(k * theta)
            r0 = r0 + a * cs + b * sn
            r1 = r1 + k * (-a * sn + b * cs)
            r2 = r2 - k * k * (a * cs + b * sn)
        return r0, r1, r2


def boundary_curve(domain: DomainSpec, theta):
    """Chart boundary curve and its first two theta-derivatives, each (..., 2)."""
    R, R1, R2 = domain.boundary_radius(theta)
    c, s = np.cos(theta), np.sin(theta)
    pos = np.stack([R * c, R * s], axis=-1)
    d1 = np.stack([R1 * c - R * s, R1 * s + R * c], axis=-1)
    d2 = np.stack([R2 * c - 2 * R1 * s - R * c, R2 * s + 2 * R1 * c - R * s], axis=-1)
    return pos, d1, d2


def boundary_mean_convexity(domain: DomainSpec, resolution: int = 2048) -> float:
    """Minimum geodesic curvature of the domain boundary, inward normal.

    With q = (X, Y, 1) tracing the boundary counter-clockwise,
    k_g = det[q, q', q''] |q|^3 / |q x q'|^3.
    """
    theta = np.linspace(0.0, 2 * pi, resolution, endpoint=False)
    pos, d1, d2 = boundary_curve(domain, theta)
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    qn = np.sqrt(1.0 + np.sum(pos**2, axis=-1))
    cross = np.stack([-d1[:, 1], d1[:, 0], pos[:, 0] * d1[:, 1] - pos[:, 1] * d1[:, 0]], axis=-1)
    kg = det * qn**3 / np.linalg.norm(cross, axis=-1) ** 3
    return float(kg.min())


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at 0."""
    x = np.asarray(offsets, dtype=float)
    m = len(x)
    V = np.vander(x, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(V, rhs)


def _radial_window(i: int, ns: int, order: int, accuracy: int) -> np.ndarray:
    half = accuracy // 2
    if i - half >= 0 and i + half <= ns - 1:
        return np.arange(i - half, i + half + 1)
    width = accuracy + order
    start = 0 if i - half < 0 else ns - width
    return np.arange(start, start + width)


@dataclass(eq=False)
class ChartGrid:
    """Boundary-fitted polar grid on a chart domain.

    Node 0 is the pole; ring ``i`` (1..ns-1) angle ``j`` is node
    ``1 + (i - 1) * nt + j``.  Ring ``ns - 1`` is the boundary.
    """

    domain: DomainSpec
    ns: int
    nt: int
    accuracy: int = 2
    s: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)
    ring: np.ndarray = field(init=False)
    xy: np.ndarray = field(init=False)
    points: np.ndarray = field(init=False)
    metric: np.ndarray = field(init=False)
    christoffel: np.ndarray = field(init=False)
    frame: np.ndarray = field(init=False)
    tangents: np.ndarray = field(init=False)
    area_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.ns < 9 or self.nt < 16 or self.nt % 2:
            raise ValueError(f"need ns >= 9 and even nt >= 16, got {self.ns}x{self.nt}")
        if self.accuracy not in (2, 4):
            raise ValueError(f"stencil accuracy must be 2 or 4, got {self.accuracy}")
        ns, nt = self.ns, self.nt
        self.hs = 1.0 / (ns - 1)
        self.ht = 2 * pi / nt
        sv = np.arange(1, ns) / (ns - 1)
        tv = np.arange(nt) * self.ht
        S, T = np.meshgrid(sv, tv, indexing="ij")
        self.s = np.concatenate([[0.0], S.ravel()])
        self.theta = np.concatenate([[0.0], T.ravel()])
        self.ring = np.concatenate([[0], np.repeat(np.arange(1, ns), nt)])
        R, R1, R2 = self.domain.boundary_radius(self.theta)
        c, sn = np.cos(self.theta), np.sin(self.theta)
        self.xy = np.stack([self.s * R * c, self.s * R * sn], axis=-1)
        self.points = gnomonic_inverse(self.xy)
        self.metric = chart_metric(self.xy)
        self.christoffel = chart_christoffel(self.xy)
        self.frame = chart_frame(self.xy)
        self.tangents = np.einsum("nik,nkd->nid", self.frame, _chart_tangents(self.xy))

        # map derivatives J[k, a] = dx^k / dxi^a, xi = (s, theta)
        s = self.s
        J = np.zeros((self.size, 2, 2))
        J[:, 0, 0] = R * c
        J[:, 1, 0] = R * sn
        J[:, 0, 1] = s * (R1 * c - R * sn)
        J[:, 1, 1] = s * (R1 * sn + R * c)
        J2 = np.zeros((self.size, 2, 2, 2))
        J2[:, 0, 0, 1] = J2[:, 0, 1, 0] = R1 * c - R * sn
        J2[:, 1, 0, 1] = J2[:, 1, 1, 0] = R1 * sn + R * c
        J2[:, 0, 1, 1] = s * (R2 * c - 2 * R1 * sn - R * c)
        J2[:, 1, 1, 1] = s * (R2 * sn + 2 * R1 * c - R * sn)
        self._J, self._J2 = J, J2

        detg = 1.0 / (1.0 + np.sum(self.xy**2, axis=-1)) ** 1.5
        trap = np.where(self.ring == ns - 1, 0.5, 1.0)
        self.area_weights = detg * s * R**2 * trap * self.hs * self.ht
        self._assemble()

    @property
    def size(self) -> int:
        return 1 + (self.ns - 1) * self.nt

    @property
    def boundary(self) -> np.ndarray:
        return self.ring == self.ns - 1

    @property
    def interior(self) -> np.ndarray:
        """Nodes carrying the equation: pole and rings 1..ns-2."""
        return ~self.boundary

    def index(self, i: int, j: int) -> int:
        if i == 0:
            return 0
        return 1 + (i - 1) * self.nt + (j % self.nt)

    def _radial_matrix(self, order: int) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for i in range(1, self.ns):
            win = _radial_window(i, self.ns, order, self.accuracy)
            w = fd_weights(win - i, order) / self.hs**order
            for j in range(self.nt):
                r = self.index(i, j)
                for k, wk in zip(win, w):
                    rows.append(r)
                    cols.append(self.index(k, j))
                    vals.append(wk)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def _angular_matrix(self, order: int) -> sp.csr_matrix:
        half = self.accuracy // 2
        offsets = np.arange(-half, half + 1)
        w = fd_weights(offsets, order) / self.ht**order
        rows, cols, vals = [], [], []
        for i in range(1, self.ns):
            for j in range(self.nt):
                r = self.index(i, j)
                for off, wk in zip(offsets, w):
                    if abs(wk) > 1e-14 * abs(w).max():
                        rows.append(r)
                        cols.append(self.index(i, j + off))
                        vals.append(wk)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def _pole_rows(self):
        """Constrained quadratic fit through the pole over rings 1 and 2."""
        ids = np.array([self.index(i, j) for i in (1, 2) for j in range(self.nt)])
        X, Y = self.xy[ids, 0], self.xy[ids, 1]
        V = np.stack([X, Y, X * X, X * Y, Y * Y], axis=-1)
        W = np.linalg.pinv(V)
        rows = {}
        for name, coef, scale in (("x", 0, 1.0), ("y", 1, 1.0), ("xx", 2, 2.0),
                                  ("xy", 3, 1.0), ("yy", 4, 2.0)):
            vec = np.zeros(self.size)
            vec[ids] = scale * W[coef]
            vec[0] = -scale * W[coef].sum()
            rows[name] = vec
        return rows

    def _assemble(self):
        Ds, Dt = self._radial_matrix(1), self._angular_matrix(1)
        Dss, Dtt = self._radial_matrix(2), self._angular_matrix(2)
        Dst = (Ds @ Dt).tocsr()
        first = [Ds, Dt]
        second = [[Dss, Dst], [Dst, Dtt]]

        Jinv = np.zeros_like(self._J)
        ring = self.ring > 0
        Jinv[ring] = np.linalg.inv(self._J[ring])
        diag = sp.diags

        chart1 = [sum(diag(Jinv[:, a, k]) @ first[a] for a in range(2)) for k in range(2)]
        chart2 = [[None, None], [None, None]]
        for k in range(2):
            for l in range(k, 2):
                acc = None
                for a in range(2):
                    for b in range(2):
                        corr = second[a][b] - sum(diag(self._J2[:, m, a, b]) @ chart1[m] for m in range(2))
                        term = diag(Jinv[:, a, k] * Jinv[:, b, l]) @ corr
                        acc = term if acc is None else acc + term
                acc = acc - sum(diag(self.christoffel[:, m, k, l]) @ chart1[m] for m in range(2))
                chart2[k][l] = acc
        chart2[1][0] = chart2[0][1]

        E = self.frame
        grad = [sum(diag(E[:, i, k]) @ chart1[k] for k in range(2)) for i in range(2)]
        hess = {}
        for i, j in ((0, 0), (0, 1), (1, 1)):
            hess[i, j] = sum(diag(E[:, i, k] * E[:, j, l]) @ chart2[k][l]
                             for k in range(2) for l in range(2))

        pole = self._pole_rows()
        keep = diag(ring.astype(float))

        def with_pole(M, vec):
            M = (keep @ M).tolil()
            M[0, :] = vec
            return M.tocsr()

        self.grad_ops = (with_pole(grad[0], pole["x"]), with_pole(grad[1], pole["y"]))
        self.hess_ops = {
            (0, 0): with_pole(hess[0, 0], pole["xx"]),
            (0, 1): with_pole(hess[0, 1], pole["xy"]),
            (1, 1): with_pole(hess[1, 1], pole["yy"]),
        }
        self.hess_ops[1, 0] = self.hess_ops[0, 1]

    def export_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("node,chart_x,chart_y,sphere_x,sphere_y,sphere_z\n")
            for k, (xy, p) in enumerate(zip(self.xy.tolist(), self.points.tolist())):
                fh.write(f"{k},{xy[0]!r},{xy[1]!r},{p[0]!r},{p[1]!r},{p[2]!r}\n")


def build_grid(domain: DomainSpec, ns: int, nt: int, accuracy: int = 2) -> ChartGrid:
    """Grid with ``accuracy``-order stencils (2 or 4) off the pole.

    The pole closure is a quadratic fit and stays second order either way.
    """
    return ChartGrid(domain, ns, nt, accuracy)


def read_grid_csv(path) -> np.ndarray:
    """Rows of (chart_x, chart_y, sphere_x, sphere_y, sphere_z)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:]


def covariant_gradient(grid: ChartGrid, u) -> np.ndarray:
    """Frame components of grad u, shape (N, 2)."""
    u = _as_field(grid, u)
    return np.stack([grid.grad_ops[0] @ u, grid.grad_ops[1] @ u], axis=-1)


def covariant_hessian(grid: ChartGrid, u) -> np.ndarray:
    """Frame components of the covariant Hessian, shape (N, 2, 2), symmetric."""
    u = _as_field(grid, u)
    h00 = grid.hess_ops[0, 0] @ u
    h01 = grid.hess_ops[0, 1] @ u
    h11 = grid.hess_ops[1, 1] @ u
    return np.stack([np.stack([h00, h01], -1), np.stack([h01, h11], -1)], -2)


def _as_field(grid: ChartGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError(f"field has shape {u.shape}, grid expects ({grid.size},)")
    return u
