"""Pointwise geometry of the radial graph X = x / u over a chart grid.

All tensors are frame components (orthonormal frame of the round sphere),
so the identity matrix is the round metric.  Curvatures are taken with
respect to the inward normal: the unit sphere (u = 1) has kappa = (1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere_chart import ChartGrid, covariant_gradient, covariant_hessian
from .symfun import CurvatureSpec, cone_margins


@dataclass
class GraphGeometry:
    u: np.ndarray
    grad: np.ndarray
    w: np.ndarray
    g: np.ndarray
    gamma_up: np.ndarray
    gamma_down: np.ndarray
    h: np.ndarray
    A: np.ndarray
    kappa: np.ndarray
    normal: np.ndarray | None = None


def _outer(p):
    return p[..., :, None] * p[..., None, :]


def geometry_from_derivatives(u, du, Hu, *, h_sign: float = 1.0) -> GraphGeometry:
    """Metric, square roots, second fundamental form and A[u] from u, grad u,
    and the covariant Hessian of u (all frame components).

    ``h_sign`` exists only so the property suite can inject a sign fault.
    """
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    Hu = np.asarray(Hu, dtype=float)
    n = du.shape[-1]
    eye = np.eye(n)
    uu = u[..., None, None]
    pp = _outer(du)
    w = np.sqrt(u**2 + np.sum(du**2, axis=-1))
    ww = w[..., None, None]
    g = (eye + pp / uu**2) / uu**2
    gamma_up = uu * eye - uu * pp / (ww * (uu + ww))
    gamma_down = eye / uu + pp / (uu**2 * (uu + ww))
    h = h_sign * (uu * eye + Hu) / (uu * ww)
    A = gamma_up @ h @ gamma_up
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    kappa = np.linalg.eigvalsh(A)
    return GraphGeometry(u=u, grad=du, w=w, g=g, gamma_up=gamma_up, gamma_down=gamma_down,
                         h=h, A=A, kappa=kappa)


def graph_geometry(grid: ChartGrid, u, spec: CurvatureSpec | None = None, *,
                   h_sign: float = 1.0) -> GraphGeometry:
    """Geometry of the radial graph of 1/u at every grid node."""
    u = np.asarray(u, dtype=float)
    bad = np.flatnonzero(~(u > 0.0))
    if bad.size:
        raise ValueError(f"u must be positive; node {bad[0]} has u = {u[bad[0]]:.6g}")
    if spec is not None and spec.n != 2:
        raise ValueError("grid geometry is two-dimensional")
    du = covariant_gradient(grid, u)
    Hu = covariant_hessian(grid, u)
    geom = geometry_from_derivatives(u, du, Hu, h_sign=h_sign)
    amb = np.einsum("ni,nid->nd", du, grid.tangents)
    geom.normal = -(amb + u[:, None] * grid.points) / geom.w[:, None]
    return geom


@dataclass
class AdmissibilityReport:
    all_admissible: bool
    worst_margin: float
    failing_nodes: np.ndarray


def admissibility(geom: GraphGeometry, spec: CurvatureSpec, nodes=None) -> AdmissibilityReport:
    """Cone membership of kappa at each node (restricted to ``nodes`` if given)."""
    kappa = geom.kappa if nodes is None else geom.kappa[nodes]
    ids = np.arange(len(geom.kappa)) if nodes is None else np.arange(len(geom.kappa))[nodes]
    margins = cone_margins(spec, kappa)
    ok = np.all(margins > 0.0, axis=0)
    return AdmissibilityReport(all_admissible=bool(ok.all()),
                               worst_margin=float(margins.min()),
                               failing_nodes=ids[~ok])


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    quads: list
    triangles: list


def embed_mesh(grid: ChartGrid, u) -> SurfaceMesh:
    """Vertices x / u with quads between rings and a triangle fan at the pole."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("u must be positive")
    verts = grid.points / u[:, None]
    nt = grid.nt
    tris = [(0, grid.index(1, j), grid.index(1, j + 1)) for j in range(nt)]
    quads = [(grid.index(i, j), grid.index(i + 1, j), grid.index(i + 1, j + 1), grid.index(i, j + 1))
             for i in range(1, grid.ns - 1) for j in range(nt)]
    return SurfaceMesh(verts, quads, tris)


def write_obj(mesh: SurfaceMesh, path) -> None:
    """ASCII polygon file: ``v x y z`` per vertex, then ``f`` lines, 1-based."""
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in np.asarray(mesh.vertices, dtype=float).tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for face in mesh.triangles + mesh.quads:
            fh.write("f " + " ".join(str(k + 1) for k in face) + "\n")


def read_obj(path) -> SurfaceMesh:
    verts, quads, tris = [], [], []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                face = tuple(int(k) - 1 for k in parts[1:])
                (quads if len(face) == 4 else tris).append(face)
    return SurfaceMesh(np.array(verts), quads, tris)
