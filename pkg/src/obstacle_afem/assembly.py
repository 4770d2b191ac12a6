"""Stiffness and load assembly, and triangle quadrature rules."""
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from ._parallel import concat_chunks

DEFAULT_LOAD_DEGREE = 4


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle.

    ``points`` are barycentric coordinates (Q, 3); ``weights`` sum to one,
    so the integral over T is ``|T| * sum(w * f(points))``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def physical_points(self, mesh, tris=None):
        """Quadrature nodes on every triangle (or a subset), shape (T, Q, 2)."""
        t = mesh.triangles if tris is None else mesh.triangles[tris]
        return np.einsum("qk,tkd->tqd", self.points, mesh.vertices[t])


def _collapsed_rule(degree):
    # Gauss-Jacobi in the collapsed direction, Gauss-Legendre across
    n = degree // 2 + 1
    xu, wu = roots_jacobi(n, 1.0, 0.0)
    xv, wv = roots_legendre(n)
    u = 0.5 * (1.0 + xu)
    v = 0.5 * (1.0 + xv)
    wu = wu / 4.0
    wv = wv / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    W = 2.0 * np.outer(wu, wv)
    l1 = U.ravel()
    l2 = ((1.0 - U) * V).ravel()
    pts = np.stack([l1, l2, 1.0 - l1 - l2], axis=1)
    return pts, W.ravel()


def quadrature_rule(degree):
    """Positive-weight rule exact for polynomials of total degree ``degree``.

    Degrees 1-5 use the centroid, edge-midpoint and 7-point Radon rules;
    higher degrees use a collapsed Gauss-Jacobi product rule.
    """
    if int(degree) != degree or degree < 1:
        raise ValueError(f"unsupported quadrature degree {degree!r}")
    degree = int(degree)
    if degree == 1:
        pts = np.array([[1.0, 1.0, 1.0]]) / 3.0
        w = np.array([1.0])
    elif degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
    elif degree <= 5:
        s = math.sqrt(15.0)
        a1, a2 = (6.0 - s) / 21.0, (6.0 + s) / 21.0
        w1, w2 = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
        pts = np.array([
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [a1, a1, 1.0 - 2.0 * a1], [a1, 1.0 - 2.0 * a1, a1], [1.0 - 2.0 * a1, a1, a1],
            [a2, a2, 1.0 - 2.0 * a2], [a2, 1.0 - 2.0 * a2, a2], [1.0 - 2.0 * a2, a2, a2],
        ])
        w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
    else:
        pts, w = _collapsed_rule(degree)
    return QuadratureRule(pts, w, degree)


def gauss_segment(degree):
    """Gauss-Legendre nodes on [0, 1] and weights summing to one."""
    n = max(int(degree) // 2 + 1, 1)
    x, w = roots_legendre(n)
    return 0.5 * (1.0 + x), 0.5 * w


def element_stiffness(mesh, tris=None):
    """Local stiffness matrices |T| grad(lambda_i) . grad(lambda_j), shape (T, 3, 3)."""
    if np.any(mesh.areas <= 0):
        raise ValueError("degenerate triangle (non-positive area)")
    g = mesh.grad_lambda if tris is None else mesh.grad_lambda[tris]
    a = mesh.areas if tris is None else mesh.areas[tris]
    return a[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def assemble_stiffness(mesh):
    """Global P1 stiffness matrix as CSR; duplicate triplets are summed."""
    t = mesh.triangles
    local = concat_chunks(lambda s: element_stiffness(mesh, s), mesh.n_triangles)
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_load(f, mesh, rule=None):
    """Load vector entries approximately equal to the integral of f * psi_z."""
    rule = quadrature_rule(DEFAULT_LOAD_DEGREE) if rule is None else rule

    def chunk(s):
        xq = rule.physical_points(mesh, s)
        fq = f(xq[..., 0], xq[..., 1])
        return mesh.areas[s, None] * ((fq * rule.weights) @ rule.points)

    local = concat_chunks(chunk, mesh.n_triangles)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def integrate(mesh, func, rule, tris=None):
    """Elementwise integrals of ``func(points)`` where points is (T, Q, 2)."""
    tris = np.arange(mesh.n_triangles) if tris is None else np.asarray(tris)
    def chunk(s):
        sel = tris[s]
        vals = func(rule.physical_points(mesh, sel), sel)
        return mesh.areas[sel] * (vals @ rule.weights)
    return concat_chunks(chunk, len(tris))
