"""Discrete Lagrange multiplier and contact / free-boundary classification."""
from dataclasses import dataclass

import numpy as np

from .space import lumped_vertex_mass


@dataclass(frozen=True)
class ElementClassification:
    free_boundary: np.ndarray
    contact: np.ndarray
    noncontact: np.ndarray
    free_boundary_edges: np.ndarray
    contact_vertex: np.ndarray

    def label(self, n_triangles):
        """Per-triangle label: 0 non-contact, 1 free boundary, 2 contact."""
        out = np.zeros(n_triangles, dtype=np.int8)
        out[self.free_boundary] = 1
        out[self.contact] = 2
        return out


def compute_sigma_h(solution, mesh, F=None, K=None):
    """Lumped multiplier: sigma_h(z) = (F - K u_h)(z) / m_z at interior z, zero on the boundary."""
    F = solution.load if F is None else F
    K = solution.stiffness if K is None else K
    mass = lumped_vertex_mass(mesh)
    if np.any(mass <= 0):
        raise ValueError("zero lumped mass")
    sigma = (F - K @ solution.u) / mass
    sigma[mesh.boundary] = 0.0
    return sigma


def default_tolerance(u):
    return 1e-10 * (1.0 + float(np.max(np.abs(u))))


def classify_elements(mesh, u, chi, tol=None):
    """Free-boundary, contact and non-contact triangles, plus the edge set around contact vertices of free-boundary triangles."""
    u = np.asarray(u, dtype=float)
    chi = np.asarray(chi, dtype=float)
    tol = default_tolerance(u) if tol is None else tol
    touch = (u - chi) <= tol
    tv = touch[mesh.triangles]
    n_touch = tv.sum(axis=1)
    contact = np.flatnonzero(n_touch == 3)
    noncontact = np.flatnonzero(n_touch == 0)
    free = np.flatnonzero((n_touch > 0) & (n_touch < 3))

    qualifying = np.zeros(mesh.n_vertices, dtype=bool)
    ft = mesh.triangles[free]
    qualifying[ft[tv[free]]] = True
    ed = mesh.edge_data
    inner = ed.interior
    hit = qualifying[ed.edges[inner]].any(axis=1)
    return ElementClassification(free, contact, noncontact, inner[hit], touch)
