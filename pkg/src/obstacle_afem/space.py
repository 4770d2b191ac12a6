"""P1 Lagrange space on a :class:`~obstacle_afem.mesh.Mesh`.

A P1 function ("nodal field") is represented by a plain float array with one
value per mesh vertex.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

BARY_TOL = 1e-12


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of position, vectorized over coordinate arrays.

    ``value(x, y)`` returns an array shaped like ``x``; the optional
    ``grad(x, y)`` returns an array of shape ``x.shape + (2,)``.
    """

    value: Callable
    grad: Optional[Callable] = None
    name: str = ""

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.value(x, y), dtype=float), np.broadcast(x, y).shape)

    def at(self, points):
        points = np.asarray(points, dtype=float)
        return self(points[..., 0], points[..., 1])

    def gradient_at(self, points):
        if self.grad is None:
            raise ValueError(f"field {self.name or self.value!r} has no gradient")
        points = np.asarray(points, dtype=float)
        g = np.asarray(self.grad(points[..., 0], points[..., 1]), dtype=float)
        return np.broadcast_to(g, points.shape)

    def tangential_derivative(self, points, tangent, step):
        """Derivative along the unit vector ``tangent`` at ``points``.

        Uses the analytic gradient when present and otherwise a central
        difference with the given step (scalar or per-point).
        """
        points = np.asarray(points, dtype=float)
        tangent = np.asarray(tangent, dtype=float)
        if self.grad is not None:
            return np.sum(self.gradient_at(points) * tangent, axis=-1)
        step = np.asarray(step, dtype=float)[..., None]
        fwd = self.at(points + step * tangent)
        bwd = self.at(points - step * tangent)
        return (fwd - bwd) / (2.0 * step[..., 0])

    @classmethod
    def constant(cls, c):
        c = float(c)
        return cls(lambda x, y: np.full(np.broadcast(x, y).shape, c),
                   lambda x, y: np.zeros(np.broadcast(x, y).shape + (2,)),
                   name=f"constant:{c!r}")

    @classmethod
    def affine(cls, a, b, c):
        """The field ``a + b*x + c*y``."""
        a, b, c = float(a), float(b), float(c)
        return cls(lambda x, y: a + b * x + c * y,
                   lambda x, y: np.stack(np.broadcast_arrays(b + 0 * x, c + 0 * y), axis=-1),
                   name=f"linear:{a!r},{b!r},{c!r}")


def nodal_interpolate(field, mesh):
    """Lagrange interpolant: the field's values at the mesh vertices."""
    return np.array(field.at(mesh.vertices), dtype=float)


def barycentric(mesh, tri, point):
    p = mesh.vertices[mesh.triangles[tri]]
    x = np.asarray(point, dtype=float)
    g = mesh.grad_lambda[tri]
    lam = np.array([np.dot(g[k], x - p[(k + 1) % 3]) for k in range(3)])
    # barycentric coordinate k vanishes on the opposite edge through vertex k+1
    return lam


def eval_p1(values, mesh, tri, point):
    """Evaluate a P1 function on triangle ``tri`` at ``point``."""
    lam = barycentric(mesh, tri, point)
    if lam.min() < -BARY_TOL:
        raise ValueError(f"point {tuple(point)} lies outside triangle {tri}")
    return float(np.dot(lam, np.asarray(values)[mesh.triangles[tri]]))


def grad_p1(values, mesh, tri=None):
    """Elementwise constant gradient of a P1 function.

    Returns a 2-vector for a single triangle or an array (T, 2) when
    ``tri`` is None.
    """
    values = np.asarray(values, dtype=float)
    # differences against the first vertex make constants map to exactly zero
    if tri is None:
        v = values[mesh.triangles]
        d = v[:, 1:] - v[:, :1]
        return np.einsum("tk,tkd->td", d, mesh.grad_lambda[:, 1:])
    v = values[mesh.triangles[tri]]
    return (v[1:] - v[0]) @ mesh.grad_lambda[tri][1:]


def p1_at_bary(values, mesh, bary):
    """Values of a P1 function at barycentric points ``bary`` (Q, 3) on every triangle."""
    return np.asarray(values, dtype=float)[mesh.triangles] @ np.asarray(bary).T


def lumped_vertex_mass(mesh, vertex=None):
    """Diagonal of the lumped mass matrix, sum over T containing z of |T|/3."""
    m = np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                    minlength=mesh.n_vertices)
    return m if vertex is None else float(m[vertex])


def lumped_inner(mesh, w, v):
    """Mass-lumped inner product of two P1 functions."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if w.shape != (mesh.n_vertices,) or v.shape != (mesh.n_vertices,):
        raise ValueError("nodal fields do not match the mesh vertex count")
    t = mesh.triangles
    return float(np.sum(mesh.areas / 3.0 * np.sum(w[t] * v[t], axis=1)))


def element_mass_matrix(area):
    """Exact P1 element mass matrix (|T|/12)(1 + delta_ij)."""
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))
