"""Linear extension of the exact Dirichlet data into boundary triangles.

On a triangle T with boundary edge e = (A, B) and apex C, the post-processed
function is linear along every line orthogonal to e.  Its value at z is the
convex combination of ``u*`` at the two points where that line meets the
boundary of T, where ``u* = g`` on e and ``u* = u_h`` on the two other edges.

Geometry is expressed in the local frame ``(s, nu)``: ``s`` is the
arclength along e measured from A, ``nu`` the distance from the line of e
measured into T.  ``H(s)`` denotes the height of T above e at ``s``.  For
points above e, ``h1 = nu`` and ``h2 = H(s) - nu``.

If T is obtuse at A (or B) there is a sliver of T whose orthogonal lines
miss e; both intersection points then lie on edges where ``u* = u_h`` and
the extension coincides with ``u_h`` there.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

DEFAULT_NODES = 8
FD_STEP = 1e-6


@dataclass(frozen=True)
class FootPointData:
    z1: np.ndarray
    z2: np.ndarray
    h1: float
    h2: float
    subtriangle: int


@dataclass(frozen=True)
class BoundaryFrame:
    """Local frame of boundary triangles (vectorized over triangles).

    ``tri`` are triangle indices, ``A``, ``B`` the endpoints of the boundary
    edge (in the triangle's counterclockwise order) and ``C`` the apex; the
    local vertex numbers are kept so P1 values can be looked up.
    """

    tri: np.ndarray
    iA: np.ndarray
    iB: np.ndarray
    iC: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray
    t: np.ndarray
    n: np.ndarray
    sC: np.ndarray
    HC: np.ndarray

    @classmethod
    def from_mesh(cls, mesh, tris=None):
        """Frames for the given boundary triangles (default: all of them)."""
        btri, local = mesh.boundary_triangle_edges()
        counts = np.bincount(btri, minlength=mesh.n_triangles)
        if tris is None:
            tris = np.unique(btri)
        tris = np.atleast_1d(np.asarray(tris, dtype=np.int64))
        if np.any(counts[tris] > 1):
            raise ValueError("triangle has more than one boundary edge")
        if np.any(counts[tris] == 0):
            raise ValueError("triangle has no boundary edge")
        lookup = np.full(mesh.n_triangles, -1)
        lookup[btri] = local
        k = lookup[tris]
        t = mesh.triangles[tris]
        rows = np.arange(len(tris))
        iA = t[rows, (k + 1) % 3]
        iB = t[rows, (k + 2) % 3]
        iC = t[rows, k]
        return cls.from_points(mesh.vertices[iA], mesh.vertices[iB], mesh.vertices[iC],
                               tri=tris, iA=iA, iB=iB, iC=iC)

    @classmethod
    def from_points(cls, A, B, C, tri=None, iA=None, iB=None, iC=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        d = B - A
        L = np.hypot(d[:, 0], d[:, 1])
        t = d / L[:, None]
        n = np.stack([-t[:, 1], t[:, 0]], axis=1)
        sC = np.einsum("ij,ij->i", C - A, t)
        HC = np.einsum("ij,ij->i", C - A, n)
        flip = HC < 0
        n[flip] *= -1.0
        HC = np.abs(HC)
        if np.any(HC <= 1e-14 * L):
            raise ValueError("degenerate triangle")
        m = len(A)
        dummy = np.full(m, -1)
        return cls(dummy if tri is None else tri, dummy if iA is None else iA,
                   dummy if iB is None else iB, dummy if iC is None else iC,
                   A, B, C, L, t, n, sC, HC)

    def local(self, j, points):
        """(s, nu) coordinates of points (..., 2) with respect to frame j."""
        d = np.asarray(points, dtype=float) - self.A[j]
        return d @ self.t[j], d @ self.n[j]

    def height(self, j, s):
        """Lower/upper boundary ``nu`` of T on the orthogonal line at ``s``, and slope of the upper one."""
        s = np.asarray(s, dtype=float)
        L, sC, HC = self.L[j], self.sC[j], self.HC[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            on_ac = HC * s / sC if sC != 0 else np.where(s == 0, HC, 0.0)
            on_bc = HC * (L - s) / (L - sC) if sC != L else np.where(s == L, HC, 0.0)
        upper = np.where(s < sC, on_ac, on_bc)
        lower = np.where(s < 0, on_ac, np.where(s > L, on_bc, 0.0))
        slope = np.where(s < sC, HC / sC if sC != 0 else 0.0, -HC / (L - sC) if sC != L else 0.0)
        return lower, upper, slope


def _edge_data(frame, idx, g):
    A, t, L = frame.A[idx], frame.t[idx], frame.L[idx]
    gA = g.at(A)
    gB = g.at(frame.B[idx])
    return A, t, L, gA, gB


def _g_minus_gh(frame, idx, g, s):
    """(g - g_h)(A + s t) along the boundary edges ``idx``; ``s`` has shape (len(idx), K)."""
    A, t, L, gA, gB = _edge_data(frame, idx, g)
    pts = A[:, None, :] + s[..., None] * t[:, None, :]
    return g.at(pts) - (gA[:, None] + (gB - gA)[:, None] * s / L[:, None])


def _g_minus_gh_derivative(frame, idx, g, s, step=None):
    """Tangential derivative of (g - g_h) along the boundary edges ``idx``."""
    A, t, L, gA, gB = _edge_data(frame, idx, g)
    pts = A[:, None, :] + s[..., None] * t[:, None, :]
    step = (FD_STEP * L)[:, None] if step is None else step
    tt = np.broadcast_to(t[:, None, :], pts.shape)
    step = np.broadcast_to(step, s.shape)
    return g.tangential_derivative(pts, tt, step) - ((gB - gA) / L)[:, None]


def foot_points(frame, j, z):
    """Intersections of the line through z orthogonal to e with the boundary of T."""
    s, nu = frame.local(j, z)
    lower, upper, _ = frame.height(j, s)
    A, t, n = frame.A[j], frame.t[j], frame.n[j]
    z1 = A + s * t + lower * n
    z2 = A + s * t + upper * n
    sub = 1 if s < frame.sC[j] else 2
    return FootPointData(z1, z2, float(nu - lower), float(upper - nu), sub)


def tilde_values(frame, j, u_local, g, points):
    """Post-processed values at points of triangle j.

    ``u_local`` are the P1 values of u_h at (A, B, C) of the frame.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    s, nu = frame.local(j, points)
    lower, upper, _ = frame.height(j, s)
    uA, uB, uC = u_local
    L, sC, HC = frame.L[j], frame.sC[j], frame.HC[j]

    def uh(ss, vv):
        # P1 function in local coordinates through (0,0,uA), (L,0,uB), (sC,HC,uC)
        a = (uB - uA) / L
        b = (uC - uA - a * sC) / HC
        return uA + a * ss + b * vv

    on_e = (s >= 0) & (s <= L)
    foot = frame.A[j] + np.clip(s, 0, L)[:, None] * frame.t[j]
    lo_val = np.where(on_e, g.at(foot), uh(s, lower))
    hi_val = uh(s, upper)
    h1 = nu - lower
    h2 = upper - nu
    tot = h1 + h2
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(tot > 0, (h2 * lo_val + h1 * hi_val) / tot, lo_val)
    return val


def _local_values(frame, j, u):
    return np.array([u[frame.iA[j]], u[frame.iB[j]], u[frame.iC[j]]], dtype=float)


def tilde_eval(mesh, u, g, tri, point):
    """Post-processed solution at ``point`` in triangle ``tri``.

    Triangles without a boundary edge return u_h itself.
    """
    from .space import eval_p1
    btri, _ = mesh.boundary_triangle_edges()
    if tri not in set(btri.tolist()):
        return eval_p1(u, mesh, tri, point)
    frame = BoundaryFrame.from_mesh(mesh, [tri])
    return float(tilde_values(frame, 0, _local_values(frame, 0, u), g, point)[0])


def ustar_samples(frame, j, u, g, per_edge=50):
    """Samples of u* on the closed boundary of triangle j (g on e, u_h elsewhere)."""
    s = np.linspace(0.0, 1.0, per_edge)
    A, B = frame.A[j], frame.B[j]
    uA, uB, uC = _local_values(frame, j, u)
    on_e = g.at(A + np.multiply.outer(s, B - A))
    on_bc = uB + s * (uC - uB)
    on_ca = uC + s * (uA - uC)
    return np.concatenate([on_e, on_bc, on_ca])


@dataclass(frozen=True)
class DeviationSamples:
    """Quadrature over boundary triangles with the deviation from u_h.

    Arrays have shape (m, Q) / (m, Q, 2).  ``weights`` already include the
    Jacobian, so integrals are ``sum(weights * integrand, axis=1)``.
    """

    points: np.ndarray
    weights: np.ndarray
    dev: np.ndarray
    dev_grad: np.ndarray


def _gauss01(n):
    x, w = roots_legendre(n)
    return 0.5 * (1.0 + x), 0.5 * w


def deviation_samples(frame, g, n_s=DEFAULT_NODES, n_l=3, fd_step=None):
    """Quadrature for integrals involving (u~_h - u_h) over each frame triangle.

    Each triangle is split at the foot of the apex into the sub-triangles
    adjacent to A and to B.  On each piece the nodes are placed on
    orthogonal lines ``s = const`` at relative heights ``lambda = nu / H(s)``,
    which makes the normal direction integration exact.  An obtuse sliver,
    where the deviation vanishes, is covered by a weight-only piece.
    """
    m = len(frame.L)
    xs, ws = _gauss01(n_s)
    xl, wl = _gauss01(n_l)
    L, sC, HC = frame.L, frame.sC, frame.HC
    split = np.clip(sC, 0.0, L)
    pieces = []
    # piece 1: s in [0, split], far edge AC; piece 2: s in [split, L], far edge BC
    for lo, hi, far_a in ((np.zeros(m), split, True), (split, L, False)):
        width = hi - lo
        s = lo[:, None] + width[:, None] * xs[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            if far_a:
                slope = np.where(sC > 0, HC / np.where(sC > 0, sC, 1.0), 0.0)
                H = slope[:, None] * s
            else:
                slope = np.where(sC < L, -HC / np.where(sC < L, L - sC, 1.0), 0.0)
                H = slope[:, None] * (s - L[:, None])
        S = np.repeat(s[:, :, None], n_l, axis=2)
        Hq = np.repeat(H[:, :, None], n_l, axis=2)
        lam = np.broadcast_to(xl, S.shape)
        nu = lam * Hq
        w = (width[:, None] * ws[None, :])[:, :, None] * wl[None, None, :] * Hq
        idx = np.arange(m)
        flat = S.reshape(m, -1)
        phi = _g_minus_gh(frame, idx, g, flat).reshape(S.shape)
        dphi = _g_minus_gh_derivative(frame, idx, g, flat, fd_step).reshape(S.shape)
        h1 = nu
        h2 = Hq - nu
        tot = h1 + h2
        tt = frame.t[:, None, None, :]
        nn = frame.n[:, None, None, :]
        grad_h1 = np.broadcast_to(nn, S.shape + (2,))
        grad_h2 = slope[:, None, None, None] * tt - nn
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(tot > 0, 1.0 / tot ** 2, 0.0)
            ratio = np.where(tot > 0, h2 / tot, 0.0)
        grad = (coef * phi)[..., None] * (h1[..., None] * grad_h2 - h2[..., None] * grad_h1) \
            + (ratio * dphi)[..., None] * tt
        pts = frame.A[:, None, None, :] + S[..., None] * tt + nu[..., None] * nn
        pieces.append((pts.reshape(m, -1, 2), w.reshape(m, -1), (ratio * phi).reshape(m, -1),
                       grad.reshape(m, -1, 2)))

    # obtuse sliver (u~_h = u_h); a single centroid-free 3-point rule is enough for weights
    sliver_pts, sliver_w = _sliver_rule(frame)
    pts = np.concatenate([p[0] for p in pieces] + [sliver_pts], axis=1)
    w = np.concatenate([p[1] for p in pieces] + [sliver_w], axis=1)
    dev = np.concatenate([p[2] for p in pieces] + [np.zeros(sliver_w.shape)], axis=1)
    grad = np.concatenate([p[3] for p in pieces] + [np.zeros(sliver_pts.shape)], axis=1)
    w = np.where(np.isfinite(w), w, 0.0)
    return DeviationSamples(pts, w, dev, grad)


def _sliver_rule(frame):
    """Degree-5 rule on the part of T whose orthogonal lines miss e (zero weight if none)."""
    from .assembly import quadrature_rule
    rule = quadrature_rule(5)
    m = len(frame.L)
    L, sC, HC = frame.L, frame.sC, frame.HC
    A, B, C, t, n = frame.A, frame.B, frame.C, frame.t, frame.n
    verts = np.repeat(C[:, None, :], 3, axis=1).copy()
    area = np.zeros(m)
    left = sC < 0
    right = sC > L
    if left.any():
        P = A + (HC * L / (L - sC))[:, None] * n
        verts[left] = np.stack([A, C, P], axis=1)[left]
    if right.any():
        Q = A + L[:, None] * t + (HC * L / np.where(right, sC, 1.0))[:, None] * n
        verts[right] = np.stack([B, Q, C], axis=1)[right]
    d1 = verts[:, 1] - verts[:, 0]
    d2 = verts[:, 2] - verts[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    area[~(left | right)] = 0.0
    pts = np.einsum("qk,mkd->mqd", rule.points, verts)
    return pts, area[:, None] * rule.weights[None, :]


def tilde_grad_deviation_sq(mesh, g, tri, n_s=DEFAULT_NODES, fd_step=None):
    """Squared L2 norm over T of grad(u~_h - u_h) for one boundary triangle."""
    frame = BoundaryFrame.from_mesh(mesh, [tri])
    q = deviation_samples(frame, g, n_s=n_s, fd_step=fd_step)
    return float(np.sum(q.weights * np.sum(q.dev_grad ** 2, axis=-1)))


def eta_g_elementwise(mesh, g, n_s=DEFAULT_NODES, fd_step=None):
    """Per-triangle squared deviation norms (zero away from the boundary)."""
    out = np.zeros(mesh.n_triangles)
    btri, _ = mesh.boundary_triangle_edges()
    if len(btri) == 0:
        return out
    frame = BoundaryFrame.from_mesh(mesh)
    q = deviation_samples(frame, g, n_s=n_s, fd_step=fd_step)
    out[frame.tri] = np.sum(q.weights * np.sum(q.dev_grad ** 2, axis=-1), axis=1)
    return out


def eta_g(mesh, g, n_s=DEFAULT_NODES, fd_step=None):
    """Norm of grad(u_h - u~_h) over the whole mesh."""
    return float(np.sqrt(np.sum(eta_g_elementwise(mesh, g, n_s, fd_step))))
