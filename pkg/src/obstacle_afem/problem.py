"""Problem data: load, obstacle and Dirichlet data, optionally an exact solution."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import gauss_segment
from .space import ScalarField


@dataclass(frozen=True)
class ProblemData:
    f: ScalarField
    chi: ScalarField
    g: ScalarField
    exact: Optional[ScalarField] = None
    geometry: str = "polygonal"
    name: str = ""

    def scaled(self, alpha):
        """Problem with f, chi, g (and the exact solution) multiplied by alpha."""
        def sc(field):
            if field is None:
                return None
            grad = None if field.grad is None else (lambda x, y, fl=field: alpha * fl.grad(x, y))
            return ScalarField(lambda x, y, fl=field: alpha * fl.value(x, y), grad, name=f"{alpha}*{field.name}")
        return ProblemData(sc(self.f), sc(self.chi), sc(self.g), sc(self.exact), self.geometry,
                           f"{alpha}*{self.name}")

    def check_compatibility(self, mesh, degree=10, tol=1e-12):
        """Check chi <= g at boundary vertices and boundary-edge quadrature nodes."""
        ed = mesh.edge_data
        e = ed.edges[ed.boundary]
        s, _ = gauss_segment(degree)
        p0 = mesh.vertices[e[:, 0]]
        p1 = mesh.vertices[e[:, 1]]
        pts = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
        pts = np.concatenate([pts.reshape(-1, 2), mesh.vertices[mesh.boundary]])
        gap = self.chi.at(pts) - self.g.at(pts)
        if np.any(gap > tol):
            raise ValueError(f"incompatible data: chi exceeds g on the boundary by {gap.max():.3e}")
        return True
