"""Elementary symmetric functions and the normalized curvature function.

Everything here is vectorized over leading axes: an ``EigenTuple`` is an
array whose last axis has length ``n``, and a symmetric matrix is an array
whose last two axes are ``(n, n)``.  Indices are zero-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial, sqrt

import numpy as np


class AdmissibilityError(ValueError):
    """A tuple left the cone Gamma_r.

    ``index`` is the first violated order j (1-based, as in S_j), ``value`` the
    offending S_j, and ``node`` the grid node when the caller knows it.
    """

    def __init__(self, index, value, node=None, message=None):
        self.index = int(index)
        self.value = float(value)
        self.node = None if node is None else int(node)
        if message is None:
            where = "" if node is None else f" at node {node}"
            message = f"outside the admissible cone{where}: S_{index} = {value:.6g} <= 0"
        super().__init__(message)


@dataclass(frozen=True)
class CurvatureSpec:
    n: int
    r: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension n must be >= 2, got {self.n}")
        if not 1 < self.r <= self.n:
            raise ValueError(f"order r must satisfy 1 < r <= n, got r={self.r}, n={self.n}")

    @property
    def normalization(self) -> int:
        """C(n, r) = S_r(1, ..., 1)."""
        return comb(self.n, self.r)


def elementary_sym_all(lam, upto: int) -> np.ndarray:
    """Return S_0, ..., S_upto of ``lam`` stacked along a new leading axis.

    Uses the prefix recursion e_k <- e_k + x * e_{k-1}, which is O(n * upto)
    and avoids subset enumeration.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= upto <= n:
        raise ValueError(f"order {upto} out of range 0..{n}")
    e = np.zeros((upto + 1,) + lam.shape[:-1])
    e[0] = 1.0
    for i in range(n):
        x = lam[..., i]
        for k in range(upto, 0, -1):
            e[k] = e[k] + x * e[k - 1]
    return e


def elementary_sym(lam, j: int):
    """S_j(lam); S_0 = 1."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= j <= n:
        raise ValueError(f"order {j} out of range 0..{n}")
    out = elementary_sym_all(lam, j)[j]
    return float(out) if out.ndim == 0 else out


def _check_length(spec: CurvatureSpec, lam: np.ndarray) -> None:
    if lam.shape[-1] != spec.n:
        raise ValueError(f"expected tuples of length {spec.n}, got {lam.shape[-1]}")


def cone_margins(spec: CurvatureSpec, lam, order: int | None = None) -> np.ndarray:
    """S_1..S_order of ``lam`` along the leading axis (order defaults to r)."""
    lam = np.asarray(lam, dtype=float)
    _check_length(spec, lam)
    order = spec.r if order is None else order
    return elementary_sym_all(lam, order)[1:]


def cone_contains(spec: CurvatureSpec, lam, order: int | None = None):
    """True where S_j(lam) > 0 for every j = 1..r."""
    ok = np.all(cone_margins(spec, lam, order) > 0.0, axis=0)
    return bool(ok) if np.ndim(ok) == 0 else ok


def _raise_first_violation(margins: np.ndarray, nodes=None) -> None:
    bad = margins <= 0.0
    if not bad.any():
        return
    flat = margins.reshape(margins.shape[0], -1)
    badflat = bad.reshape(bad.shape[0], -1)
    point = int(np.argmax(badflat.any(axis=0)))
    j = int(np.argmax(badflat[:, point]))
    node = None
    if margins.ndim > 1:
        node = point if nodes is None else int(np.asarray(nodes).ravel()[point])
    raise AdmissibilityError(j + 1, flat[j, point], node)


def f_value(spec: CurvatureSpec, lam):
    """f(lam) = (S_r(lam) / C(n, r))^(1/r) on Gamma_r."""
    lam = np.asarray(lam, dtype=float)
    margins = cone_margins(spec, lam)
    _raise_first_violation(margins)
    out = (margins[-1] / spec.normalization) ** (1.0 / spec.r)
    return float(out) if out.ndim == 0 else out


def _sym_excluding(lam: np.ndarray, j: int) -> np.ndarray:
    """S_j(lam | i) for each i, stacked on the last axis."""
    n = lam.shape[-1]
    cols = []
    for i in range(n):
        rest = np.delete(lam, i, axis=-1)
        cols.append(elementary_sym_all(rest, j)[j])
    return np.stack(cols, axis=-1)


def f_gradient(spec: CurvatureSpec, lam) -> np.ndarray:
    """Partial derivatives f_i = df/dlam_i on Gamma_r."""
    lam = np.asarray(lam, dtype=float)
    margins = cone_margins(spec, lam)
    _raise_first_violation(margins)
    r, c = spec.r, spec.normalization
    hr = margins[-1] / c
    scale = (1.0 / r) * hr ** ((1.0 - r) / r) / c
    return scale[..., None] * _sym_excluding(lam, r - 1)


def matrix_F_derivative(spec: CurvatureSpec, A) -> np.ndarray:
    """F^{ij}(A) = dF/da_ij for F(A) = f(eigenvalues of A).

    Built as Q diag(f_k) Q^T from a symmetric eigendecomposition, so the
    result commutes with A.
    """
    A = np.asarray(A, dtype=float)
    try:
        lam, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigensolver failed: {exc}") from exc
    fk = f_gradient(spec, lam)
    return np.einsum("...ik,...k,...jk->...ij", Q, fk, Q)


def matrix_F_value(spec: CurvatureSpec, A):
    lam = np.linalg.eigvalsh(np.asarray(A, dtype=float))
    return f_value(spec, lam)


def ivochkina_ratio(spec: CurvatureSpec, lam, j: int, psi0: float, psi1: float) -> float:
    """sum f_i lam_i^2 / (lam_j [lam_j > 0] + sum_{k != j} f_k lam_k^2).

    ``j`` is zero-based. A nonpositive denominator gives ``inf``.
    """
    lam = np.asarray(lam, dtype=float)
    fv = f_value(spec, lam)
    if not psi0 <= fv <= psi1:
        raise ValueError(f"f(lam) = {fv:.6g} outside [{psi0}, {psi1}]")
    fi = f_gradient(spec, lam)
    num = float(np.sum(fi * lam**2))
    rest = np.delete(fi * lam**2, j)
    den = max(lam[j], 0.0) + float(np.sum(rest))
    if den <= 0.0:
        return float("inf")
    return num / den


def sample_gamma_psi(spec: CurvatureSpec, rng: np.random.Generator, count: int,
                     psi0: float, psi1: float) -> np.ndarray:
    """Draw ``count`` points of Gamma_r with psi0 <= f <= psi1.

    Half come from the positive orthant, half from rejection sampling of a
    Gaussian cloud (which reaches the non-convex part of the cone near its
    boundary).  Each point is rescaled onto a uniform target level of f.
    """
    n = spec.n
    half = count // 2
    orth = rng.exponential(size=(half, n))
    pool = []
    need = count - half
    while sum(len(p) for p in pool) < need:
        cand = rng.normal(size=(4 * need + 16, n))
        pool.append(cand[cone_contains(spec, cand)])
    mixed = np.concatenate(pool)[:need]
    pts = np.concatenate([orth, mixed])
    target = rng.uniform(psi0, psi1, size=len(pts))
    return pts * (target / f_value(spec, pts))[:, None]


def appendix_epsilon(n: int) -> float:
    """Lower bound on the tangential column norm, 1 / (2 sqrt(n-1) (n-2)!)."""
    return 1.0 / (2.0 * sqrt(n - 1) * factorial(n - 2))


def appendix_cofactor_check(P, K: float, gamma: int, atol: float = 1e-10) -> bool:
    """Check the column-mass bound for an orthogonal matrix.

    Given that column ``gamma`` (zero-based) has sum_{l<n} P[l, gamma]^2 < K^-2,
    every other column must carry at least ``appendix_epsilon(n)**2`` of
    mass in its first n-1 rows.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or n < 2:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if np.max(np.abs(P.T @ P - np.eye(n))) > atol:
        raise ValueError("matrix is not orthogonal to tolerance")
    mass = np.sum(P[:-1, :] ** 2, axis=0)
    if not mass[gamma] < K ** -2:
        raise ValueError(f"column {gamma} does not satisfy the hypothesis: mass {mass[gamma]:.3g} >= K^-2")
    others = np.delete(mass, gamma)
    return bool(np.all(others >= appendix_epsilon(n) ** 2))


def random_orthogonal(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Haar-distributed orthogonal matrices via sign-corrected QR."""
    z = rng.normal(size=(size, n, n))
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    return q * d[:, None, :]
