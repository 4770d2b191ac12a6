"""Discrete obstacle problem: primal-dual active set iteration and a brute-force oracle.

Sign convention: the multiplier ``lam = F - K u`` is non-positive at interior
vertices (contact pushes the solution up).  PDAS works with ``mu = -lam >= 0``.
"""
from dataclasses import dataclass, field
import itertools
import logging

import numpy as np

from .assembly import assemble_load, assemble_stiffness
from .space import nodal_interpolate

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when PDAS or the inner CG iteration does not converge."""


@dataclass(frozen=True)
class PdasParams:
    c: float = 1.0
    max_iter: int = 200
    tol: float = 1e-12

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("PDAS constant c must be positive")
        if not self.tol > 0:
            raise ValueError("linear-solve tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class DiscreteSolution:
    u: np.ndarray
    active: np.ndarray
    iterations: int
    residual_norm: float
    chi: np.ndarray = field(repr=False, default=None)
    load: np.ndarray = field(repr=False, default=None)
    stiffness: object = field(repr=False, default=None)

    @property
    def active_set(self):
        return set(int(i) for i in self.active)


def pcg(A, b, x0=None, tol=1e-12, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops once ``||r|| <= tol * ||b||``.  Returns ``(x, iterations, ||r||)``.
    """
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if n == 0:
        return x, 0, 0.0
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    if rnorm <= tol * bnorm:
        return x, 0, rnorm
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= tol * bnorm:
            return x, k, rnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach tolerance {tol:g} in {maxiter} iterations "
                      f"(relative residual {rnorm / bnorm:.3e})")


def solve_spd(K, rhs, free, tol=1e-12, fixed=None, x0=None, return_info=False):
    """Solve ``K u = rhs`` on the free DOFs with the other DOFs prescribed.

    ``free`` is a boolean mask or index array; ``fixed`` gives the values of
    the constrained DOFs (zero by default).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    mask = np.zeros(n, dtype=bool)
    mask[free] = True
    u = np.zeros(n) if fixed is None else np.array(fixed, dtype=float)
    u[mask] = 0.0 if x0 is None else np.asarray(x0, dtype=float)[mask]
    fidx = np.flatnonzero(mask)
    cidx = np.flatnonzero(~mask)
    Kff = K[fidx][:, fidx]
    b = rhs[fidx]
    if len(cidx):
        b = b - K[fidx][:, cidx] @ u[cidx]
    xf, its, res = pcg(Kff, b, u[fidx] if x0 is not None else None, tol=tol)
    u[fidx] = xf
    if return_info:
        return u, its, res
    return u


def _discrete_data(problem, mesh, K=None, F=None):
    K = assemble_stiffness(mesh) if K is None else K
    F = assemble_load(problem.f, mesh) if F is None else F
    chi = nodal_interpolate(problem.chi, mesh)
    g = nodal_interpolate(problem.g, mesh)
    return K, F, chi, g


def solve_obstacle(problem, mesh, params=None, initial_active=None, initial_guess=None,
                   K=None, F=None):
    """Primal-dual active set solution of the discrete obstacle problem.

    ``initial_active`` is a boolean vertex mask or index array; boundary
    vertices in it are ignored.
    """
    params = PdasParams() if params is None else params
    if mesh.n_dofs == 0:
        raise ValueError("mesh has no interior vertex")
    K, F, chi, g = _discrete_data(problem, mesh, K, F)
    interior = ~mesh.boundary
    n = mesh.n_vertices

    u = np.zeros(n) if initial_guess is None else np.array(initial_guess, dtype=float)
    u[mesh.boundary] = g[mesh.boundary]
    active = np.zeros(n, dtype=bool)
    if initial_active is not None:
        active[initial_active] = True
    active &= interior

    res = 0.0
    for it in range(1, params.max_iter + 1):
        free = interior & ~active
        u[active] = chi[active]
        if free.any():
            u, _, res = solve_spd(K, F, free, params.tol, fixed=u, x0=u, return_info=True)
        mu = K @ u - F
        mu[~active] = 0.0
        new_active = interior & (mu + params.c * (chi - u) > 0)
        log.debug("PDAS iteration %d: |A| = %d", it, new_active.sum())
        if np.array_equal(new_active, active):
            return DiscreteSolution(u, np.flatnonzero(active), it, res, chi, F, K)
        active = new_active
    raise SolverError(f"PDAS active set not stationary after {params.max_iter} iterations")


def brute_force_obstacle(problem, mesh, tol=1e-10, K=None, F=None):
    """Enumerate all active subsets of the interior vertices (test oracle)."""
    m = mesh.n_dofs
    if m > 12:
        raise ValueError(f"brute force limited to 12 interior vertices, mesh has {m}")
    K, F, chi, g = _discrete_data(problem, mesh, K, F)
    Kd = K.toarray()
    inner = mesh.interior_vertices
    bnd = np.flatnonzero(mesh.boundary)
    scale = max(1.0, np.abs(F).max(), np.abs(chi).max(), np.abs(g).max())
    for size in range(m + 1):
        for subset in itertools.combinations(range(m), size):
            act = np.zeros(m, dtype=bool)
            act[list(subset)] = True
            u = np.zeros(mesh.n_vertices)
            u[bnd] = g[bnd]
            u[inner[act]] = chi[inner[act]]
            fr = inner[~act]
            fixed = np.concatenate([bnd, inner[act]])
            if len(fr):
                rhs = F[fr] - Kd[np.ix_(fr, fixed)] @ u[fixed]
                u[fr] = np.linalg.solve(Kd[np.ix_(fr, fr)], rhs)
            mu = Kd @ u - F
            if np.all(u[inner] >= chi[inner] - tol * scale) and np.all(mu[inner[act]] >= -tol * scale):
                return DiscreteSolution(u, inner[act], 2 ** m, 0.0, chi, F, K)
    raise SolverError("no feasible active set found")
