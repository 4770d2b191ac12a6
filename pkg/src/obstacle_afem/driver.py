"""Adaptive loop (solve, estimate, mark, refine) and the radial disk benchmark."""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .assembly import integrate, quadrature_rule
from .estimator import AREA_DEGREE, CHI_DEGREE, EDGE_DEGREE, total_estimator
from .mesh import min_angle, refine, unit_disk_mesh
from .postprocess import DEFAULT_NODES
from .problem import ProblemData
from .solver import SolverError, solve_obstacle
from .space import ScalarField, grad_p1, nodal_interpolate

log = logging.getLogger(__name__)

__all__ = ["ProblemData", "doerfler_mark", "exact_energy_error", "LevelRecord", "AdaptHistory",
           "adaptive_loop", "disk_problem", "disk_benchmark", "CONTACT_RADIUS", "CSV_COLUMNS"]

ERROR_DEGREE = 6
DEFAULT_MAX_DOFS = 50000
ESTIMATOR_FLOOR = 1e-8
REFINEMENTS = ("bisec3", "nvb")
CONTACT_RADIUS = (math.sqrt(2.0) - 1.0) / math.sqrt(2.0)
CSV_COLUMNS = ("level", "ndof", "error", "eta_f", "eta_J", "eta_sigma", "osc_g",
               "osc_chi_grad", "osc_chi_edge", "total", "efficiency", "marked")


def doerfler_mark(indicators_sq, theta):
    """Smallest greedy set of elements carrying a ``theta`` share of the squared total.

    ``indicators_sq`` are squared element indicators.  Ties are broken by
    element index; all-zero indicators give an empty set.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta = np.asarray(indicators_sq, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and non-negative")
    total = eta.sum()
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -eta))
    if theta == 1.0:
        return np.sort(order[eta[order] > 0])
    csum = np.cumsum(eta[order])
    k = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[:min(k, len(eta))])


def exact_energy_error(grad_exact, u, mesh, rule=None):
    """Energy norm of u - u_h given the exact gradient (a callable of x, y or a ScalarField)."""
    rule = quadrature_rule(ERROR_DEGREE) if rule is None else rule
    gradient = grad_exact.gradient_at if isinstance(grad_exact, ScalarField) else \
        (lambda p: np.asarray(grad_exact(p[..., 0], p[..., 1]), dtype=float))
    gu = grad_p1(u, mesh)

    def integrand(pts, tris):
        return np.sum((gradient(pts) - gu[tris][:, None, :]) ** 2, axis=-1)

    return float(np.sqrt(np.sum(integrate(mesh, integrand, rule))))


@dataclass
class LevelRecord:
    level: int
    ndof: int
    n_triangles: int
    error: float
    parts: dict
    total: float
    marked: int
    min_angle: float
    pdas_iterations: int

    @property
    def efficiency(self):
        if self.error is None or not self.error > 0:
            return float("nan")
        return self.total / self.error

    def row(self):
        def p(name):
            return math.sqrt(self.parts.get(name, 0.0))
        err = float("nan") if self.error is None else self.error
        return (self.level, self.ndof, err, p("eta_f"), p("eta_J"), p("eta_sigma"), p("osc_g"),
                p("osc_chi_grad"), p("osc_chi_edge"), self.total, self.efficiency, self.marked)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


@dataclass
class AdaptHistory:
    levels: list = field(default_factory=list)
    meshes: list = field(default_factory=list, repr=False)
    marked_sets: list = field(default_factory=list, repr=False)
    solutions: list = field(default_factory=list, repr=False)
    estimates: list = field(default_factory=list, repr=False)
    mode: str = "simplified"
    theta: float = 0.3

    def column(self, name):
        if name == "efficiency":
            return np.array([r.efficiency for r in self.levels])
        if name in ("ndof", "level", "marked", "n_triangles", "pdas_iterations"):
            return np.array([getattr(r, name) for r in self.levels], dtype=np.int64)
        if name in ("error", "total", "min_angle"):
            return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                             for r in self.levels], dtype=float)
        return np.sqrt(np.array([r.parts.get(name, 0.0) for r in self.levels]))

    def to_csv_text(self):
        lines = [",".join(CSV_COLUMNS)]
        for r in self.levels:
            lines.append(",".join(_fmt(v) for v in r.row()))
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write(self.to_csv_text())

    def slope(self, name="error", last=6):
        """Least-squares slope of log(column) against log(ndof) over the last levels."""
        n = np.log(self.column("ndof")[-last:].astype(float))
        y = np.log(self.column(name)[-last:])
        return float(np.polyfit(n, y, 1)[0])


def _prolong(u, parents):
    if len(parents) == 0:
        return u.copy()
    return np.concatenate([u, 0.5 * (u[parents[:, 0]] + u[parents[:, 1]])])


def adaptive_loop(problem, mesh, theta=0.3, max_dofs=DEFAULT_MAX_DOFS, mode="simplified",
                  tol=ESTIMATOR_FLOOR, max_levels=None, pdas=None, keep=True,
                  area_degree=AREA_DEGREE, chi_degree=CHI_DEGREE, edge_degree=EDGE_DEGREE,
                  n_s=DEFAULT_NODES, callback=None, refinement="bisec3"):
    """Run the adaptive loop until ``max_dofs`` is reached or the estimator drops below ``tol``.

    The level reaching the DOF cap is solved and estimated but not refined.
    ``refinement="bisec3"`` splits every edge of a marked triangle (four
    children), ``"nvb"`` only its refinement edge.
    ``callback(level, mesh, solution, estimate, marked)`` is invoked per level.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if max_dofs < mesh.n_dofs:
        raise ValueError(f"DOF cap {max_dofs} is below the initial DOF count {mesh.n_dofs}")
    if refinement not in REFINEMENTS:
        raise ValueError(f"unknown refinement {refinement!r}")
    problem.check_compatibility(mesh)
    history = AdaptHistory(mode=mode, theta=theta)
    guess = None
    active = None
    level = 0
    while True:
        try:
            sol = solve_obstacle(problem, mesh, pdas, initial_active=active, initial_guess=guess)
        except SolverError as exc:
            raise SolverError(f"level {level} ({mesh.n_dofs} DOFs): {exc}") from exc
        est = total_estimator(mesh, problem, sol, mode=mode, area_degree=area_degree,
                              chi_degree=chi_degree, edge_degree=edge_degree, n_s=n_s)
        error = None
        if problem.exact is not None and problem.exact.grad is not None:
            error = exact_energy_error(problem.exact, sol.u, mesh)
        last = (mesh.n_dofs >= max_dofs or est.total < tol
                or (max_levels is not None and level >= max_levels))
        marked = np.zeros(0, dtype=np.int64) if last else doerfler_mark(est.indicator_sq, theta)
        if not last and marked.size == 0:
            last = True
        rec = LevelRecord(level, mesh.n_dofs, mesh.n_triangles, error, dict(est.parts_sq),
                          est.total, int(marked.size), min_angle(mesh), sol.iterations)
        history.levels.append(rec)
        if keep:
            history.meshes.append(mesh)
            history.marked_sets.append(marked)
            history.solutions.append(sol)
            history.estimates.append(est)
        log.info("level %d: ndof=%d total=%.4e error=%s marked=%d", level, mesh.n_dofs,
                 est.total, "n/a" if error is None else f"{error:.4e}", marked.size)
        if callback is not None:
            callback(level, mesh, sol, est, marked)
        if last:
            return history
        mesh, parents = refine(mesh, marked, all_edges=refinement == "bisec3")
        guess = _prolong(sol.u, parents)
        chi = nodal_interpolate(problem.chi, mesh)
        active = (~mesh.boundary) & (guess <= chi)
        level += 1


def disk_problem():
    """Radially symmetric benchmark on the unit disk with a known solution."""
    r0 = CONTACT_RADIUS

    def radius(x, y):
        return np.hypot(x, y)

    def f(x, y):
        r = radius(x, y)
        with np.errstate(divide="ignore"):
            return np.where(r < r0, 0.0, 4.0 * r0 / np.where(r > 0, r, 1.0))

    def u(x, y):
        r = radius(x, y)
        return np.where(r < r0, 1.0 - 2.0 * r * r, 4.0 * r0 * (1.0 - r))

    def grad_u(x, y):
        r = radius(x, y)
        safe = np.where(r > 0, r, 1.0)
        scale = np.where(r < r0, -4.0, -4.0 * r0 / safe)
        return np.stack([scale * x, scale * y], axis=-1)

    def chi(x, y):
        return 1.0 - 2.0 * (x * x + y * y)

    def grad_chi(x, y):
        return np.stack([-4.0 * x, -4.0 * y], axis=-1)

    exact = ScalarField(u, grad_u, name="disk_exact")
    return ProblemData(ScalarField(f, name="disk_load"), ScalarField(chi, grad_chi, name="disk_obstacle"),
                       exact, exact, geometry="unit_circle", name="disk")


def disk_benchmark(theta=0.3, max_dofs=DEFAULT_MAX_DOFS, mode="simplified", **kwargs):
    return adaptive_loop(disk_problem(), unit_disk_mesh(), theta=theta, max_dofs=max_dofs,
                         mode=mode, **kwargs)
