"""Residual error indicators, data oscillations and their aggregation.

Two aggregation modes are provided:

``simplified``
    eta_f^2 + eta_J^2 + eta_sigma^2 + |chi - chi_h|_1^2
    + sum_e h_e |(g - g_h)'|_e^2 + sum_e h_e |(chi - chi_h)'|_e^2
    (free of max/min operations; used by the adaptive benchmark).
``general``
    eta_f^2 + eta_J^2 + eta_sigma^2 + eta_g^2 + positive-part term
    + contact term + free-boundary jump term + sum_e h_e |(g - g_h)'|_e^2.
"""
from dataclasses import dataclass, field

import numpy as np

from .assembly import gauss_segment, integrate, quadrature_rule
from .multiplier import classify_elements, compute_sigma_h
from .postprocess import BoundaryFrame, deviation_samples, ustar_samples, DEFAULT_NODES
from .space import grad_p1, nodal_interpolate

MODES = ("simplified", "general")
AREA_DEGREE = 4
CHI_DEGREE = 5
EDGE_DEGREE = 10


def eta_f_T(mesh, f, sigma, rule=None):
    """h_T * ||f - sigma_h||_{L2(T)} for every triangle."""
    rule = quadrature_rule(AREA_DEGREE) if rule is None else rule
    sig = np.asarray(sigma, dtype=float)

    def integrand(pts, tris):
        s = sig[mesh.triangles[tris]] @ rule.points.T
        return (f(pts[..., 0], pts[..., 1]) - s) ** 2

    return mesh.diameters * np.sqrt(integrate(mesh, integrand, rule))


def normal_jumps(mesh, values):
    """[grad v_h] . n_+ on interior edges (ordered as ``edge_data.interior``)."""
    ed = mesh.edge_data
    inner = ed.interior
    g = grad_p1(values, mesh)
    tp, tm = ed.edge_triangles[inner, 0], ed.edge_triangles[inner, 1]
    n = ed.normals[inner]
    # w_+ . n_+ + w_- . n_- with n_- = -n_+
    return np.einsum("ij,ij->i", g[tp], n) + np.einsum("ij,ij->i", g[tm], -n)


def eta_jump(mesh, u):
    """h_e^{1/2} ||[grad u_h]||_{L2(e)} for every interior edge."""
    h = mesh.edge_data.lengths[mesh.edge_data.interior]
    return h * np.abs(normal_jumps(mesh, u))


def eta_sigma_T(mesh, sigma):
    """h_T^2 ||grad sigma_h||_{L2(T)}."""
    gs = grad_p1(sigma, mesh)
    return mesh.diameters ** 2 * np.hypot(gs[:, 0], gs[:, 1]) * np.sqrt(mesh.areas)


def boundary_osc(mesh, v, degree=EDGE_DEGREE, edges=None):
    """h_e ||(v - v_h)'||^2_{L2(e)} on boundary edges (v_h the nodal interpolant)."""
    ed = mesh.edge_data
    edges = ed.boundary if edges is None else np.asarray(edges)
    e = ed.edges[edges]
    p0 = mesh.vertices[e[:, 0]]
    p1 = mesh.vertices[e[:, 1]]
    return segment_osc(p0, p1, v, degree)


def segment_osc(p0, p1, v, degree=EDGE_DEGREE):
    """h ||(v - v_h)'||^2 on straight segments p0 -> p1 (arrays (m, 2))."""
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    d = p1 - p0
    h = np.hypot(d[:, 0], d[:, 1])
    t = d / h[:, None]
    s, w = gauss_segment(degree)
    pts = p0[:, None, :] + s[None, :, None] * d[:, None, :]
    dv = v.tangential_derivative(pts, np.broadcast_to(t[:, None, :], pts.shape),
                                 np.broadcast_to((1e-6 * h)[:, None], pts.shape[:2]))
    slope = (v.at(p1) - v.at(p0)) / h
    return h * h * ((dv - slope[:, None]) ** 2 @ w)


def boundary_osc_g(g, p0, p1, degree=EDGE_DEGREE):
    """Single-edge version: h_e ||(g - g_h)'||^2_{L2(e)}."""
    return float(segment_osc(np.asarray(p0, float), np.asarray(p1, float), g, degree)[0])


def obstacle_osc(mesh, chi, degree=CHI_DEGREE, edge_degree=EDGE_DEGREE):
    """Elementwise ||grad(chi - chi_h)||^2_T and edgewise h_e ||(chi - chi_h)'||^2_e."""
    rule = quadrature_rule(degree)
    gh = grad_p1(nodal_interpolate(chi, mesh), mesh)

    def integrand(pts, tris):
        return np.sum((chi.gradient_at(pts) - gh[tris][:, None, :]) ** 2, axis=-1)

    return integrate(mesh, integrand, rule), boundary_osc(mesh, chi, edge_degree)


def _tilde_on_boundary(mesh, u, g, n_s):
    """Quadrature data for the post-processed solution on boundary triangles."""
    frame = BoundaryFrame.from_mesh(mesh)
    q = deviation_samples(frame, g, n_s=n_s)
    gu = grad_p1(u, mesh)[frame.tri]
    # u_h at quadrature points via barycentric coordinates of each triangle
    tri = frame.tri
    lam = _barycentric_points(mesh, tri, q.points)
    uh = np.einsum("mqk,mk->mq", lam, u[mesh.triangles[tri]])
    return frame, q, uh + q.dev, gu[:, None, :] + q.dev_grad


def _barycentric_points(mesh, tris, points):
    p = mesh.vertices[mesh.triangles[tris]]
    g = mesh.grad_lambda[tris]
    lam = np.empty(points.shape[:2] + (3,))
    for k in range(3):
        lam[..., k] = np.einsum("mqd,md->mq", points - p[:, None, (k + 1) % 3, :], g[:, k, :])
    return lam


@dataclass(frozen=True)
class GeneralExtras:
    pos_part_T: np.ndarray
    contact_T: np.ndarray
    fb_jump_e: np.ndarray
    fb_edges: np.ndarray

    @property
    def pos_part(self):
        return float(np.sum(self.pos_part_T))

    @property
    def contact(self):
        return float(np.sum(self.contact_T))

    @property
    def fb_jump(self):
        return float(np.sum(self.fb_jump_e))


def general_extras(mesh, u, g, sigma, chi, classification, rule=None, n_s=DEFAULT_NODES):
    """The positive-part, contact and free-boundary jump terms (all squared)."""
    rule = quadrature_rule(AREA_DEGREE) if rule is None else rule
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    chi_h = nodal_interpolate(chi, mesh)
    gu = grad_p1(u, mesh)

    # ||grad (chi - u~_h)^+||^2: interior triangles use u_h itself
    btri, _ = mesh.boundary_triangle_edges()
    interior_tri = np.setdiff1d(np.arange(mesh.n_triangles), btri)

    def pos_interior(pts, tris):
        uh = u[mesh.triangles[tris]] @ rule.points.T
        diff = chi(pts[..., 0], pts[..., 1]) - uh
        dg = chi.gradient_at(pts) - gu[tris][:, None, :]
        return np.where(diff > 0, np.sum(dg ** 2, axis=-1), 0.0)

    pos = np.zeros(mesh.n_triangles)
    pos[interior_tri] = integrate(mesh, pos_interior, rule, interior_tri)
    if len(btri):
        frame, q, ut, gut = _tilde_on_boundary(mesh, u, g, n_s)
        diff = chi.at(q.points) - ut
        dg = chi.gradient_at(q.points) - gut
        pos[frame.tri] = np.sum(q.weights * np.where(diff > 0, np.sum(dg ** 2, axis=-1), 0.0), axis=1)

    # int_T (-sigma_h) (chi - chi_h)^- over free-boundary and contact triangles
    fc = np.union1d(classification.free_boundary, classification.contact)

    def contact_integrand(pts, tris):
        s = sigma[mesh.triangles[tris]] @ rule.points.T
        ch = chi_h[mesh.triangles[tris]] @ rule.points.T
        neg = np.maximum(-(chi(pts[..., 0], pts[..., 1]) - ch), 0.0)
        return -s * neg

    contact = np.zeros(mesh.n_triangles)
    if len(fc):
        contact[fc] = integrate(mesh, contact_integrand, rule, fc)

    # sum over edges around contact vertices of h_e int_e [grad(u_h - chi_h)]^2
    ed = mesh.edge_data
    jumps = normal_jumps(mesh, u - chi_h)
    pos_in_interior = np.searchsorted(ed.interior, classification.free_boundary_edges)
    h = ed.lengths[classification.free_boundary_edges]
    fb = h * h * jumps[pos_in_interior] ** 2
    return GeneralExtras(pos, contact, fb, classification.free_boundary_edges)


def obstacle_below_trace(mesh, u, g, chi, rule=None, per_edge=50, tol=1e-12):
    """max of chi over T <= min of u* over the boundary of T, per boundary triangle.

    Returns ``(triangles, flags)``.
    """
    rule = quadrature_rule(AREA_DEGREE) if rule is None else rule
    frame = BoundaryFrame.from_mesh(mesh)
    pts = rule.physical_points(mesh, frame.tri)
    verts = mesh.vertices[mesh.triangles[frame.tri]]
    chi_max = np.maximum(chi.at(pts).max(axis=1), chi.at(verts).max(axis=1))
    flags = np.empty(len(frame.tri), dtype=bool)
    for j in range(len(frame.tri)):
        flags[j] = chi_max[j] <= ustar_samples(frame, j, u, g, per_edge).min() + tol
    return frame.tri, flags


@dataclass
class EstimatorBreakdown:
    """Indicators and totals.  Attributes ending in ``_sq`` are squared contributions."""

    mode: str
    eta_f_T: np.ndarray
    eta_sigma_T: np.ndarray
    eta_J_e: np.ndarray
    osc_g_sq_e: np.ndarray
    osc_chi_grad_sq_T: np.ndarray
    osc_chi_edge_sq_e: np.ndarray
    indicator_sq: np.ndarray
    parts_sq: dict
    eta_g_sq_T: np.ndarray = None
    extras: GeneralExtras = None
    sigma: np.ndarray = field(default=None, repr=False)
    classification: object = field(default=None, repr=False)

    @property
    def total_sq(self):
        total = 0.0
        for v in self.parts_sq.values():
            total += v
        return total

    @property
    def total(self):
        return float(np.sqrt(self.total_sq))

    def part(self, name):
        return float(np.sqrt(self.parts_sq[name]))

    @property
    def indicators(self):
        return np.sqrt(self.indicator_sq)


def total_estimator(mesh, problem, solution, mode="simplified", sigma=None,
                    area_degree=AREA_DEGREE, chi_degree=CHI_DEGREE, edge_degree=EDGE_DEGREE,
                    n_s=DEFAULT_NODES):
    """Compute all indicators for ``mode`` and aggregate them."""
    if mode not in MODES:
        raise ValueError(f"unknown estimator mode {mode!r}")
    u = solution.u
    sigma = compute_sigma_h(solution, mesh) if sigma is None else sigma
    rule = quadrature_rule(area_degree)
    ed = mesh.edge_data
    inner, bnd = ed.interior, ed.boundary

    ef = eta_f_T(mesh, problem.f, sigma, rule)
    es = eta_sigma_T(mesh, sigma)
    ej = eta_jump(mesh, u)
    og = boundary_osc(mesh, problem.g, edge_degree)

    ind = ef ** 2 + es ** 2
    half = 0.5 * ej ** 2
    np.add.at(ind, ed.edge_triangles[inner, 0], half)
    np.add.at(ind, ed.edge_triangles[inner, 1], half)
    bt = ed.edge_triangles[bnd, 0]
    np.add.at(ind, bt, og)

    parts = {"eta_f": float(np.sum(ef ** 2)), "eta_J": float(np.sum(ej ** 2)),
             "eta_sigma": float(np.sum(es ** 2))}
    if mode == "simplified":
        ocg, oce = obstacle_osc(mesh, problem.chi, chi_degree, edge_degree)
        ind += ocg
        np.add.at(ind, bt, oce)
        parts["osc_g"] = float(np.sum(og))
        parts["osc_chi_grad"] = float(np.sum(ocg))
        parts["osc_chi_edge"] = float(np.sum(oce))
        return EstimatorBreakdown(mode, ef, es, ej, og, ocg, oce, ind, parts, sigma=sigma)

    from .postprocess import eta_g_elementwise
    if problem.chi.grad is None:
        raise ValueError("general mode needs the obstacle gradient")
    cls = classify_elements(mesh, u, nodal_interpolate(problem.chi, mesh))
    egT = eta_g_elementwise(mesh, problem.g, n_s=n_s)
    ex = general_extras(mesh, u, problem.g, sigma, problem.chi, cls, rule, n_s)
    ind += egT + ex.pos_part_T + ex.contact_T
    fbt = ed.edge_triangles[ex.fb_edges]
    np.add.at(ind, fbt[:, 0], 0.5 * ex.fb_jump_e)
    np.add.at(ind, fbt[:, 1], 0.5 * ex.fb_jump_e)
    parts["eta_g"] = float(np.sum(egT))
    parts["pos_part"] = ex.pos_part
    parts["contact"] = ex.contact
    parts["fb_jump"] = ex.fb_jump
    parts["osc_g"] = float(np.sum(og))
    return EstimatorBreakdown(mode, ef, es, ej, og, np.zeros(mesh.n_triangles),
                              np.zeros(len(bnd)), ind, parts, eta_g_sq_T=egT, extras=ex,
                              sigma=sigma, classification=cls)
