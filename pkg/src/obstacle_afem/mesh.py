"""Conforming triangulations with newest vertex bisection.

Triangles are stored counterclockwise with the *peak* (newest vertex) in
local position 0, so the refinement edge of triangle ``t`` is always the
edge ``(t[1], t[2])``.  Local edge ``k`` of a triangle is the edge opposite
local vertex ``k``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

GEOMETRIES = ("polygonal", "unit_circle")


class MeshError(ValueError):
    """Raised for invalid or non-conforming mesh input."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True)
class EdgeSet:
    """Edge topology of a mesh.

    ``edges[i]`` is a sorted vertex pair.  ``edge_triangles[i]`` holds the
    incident triangles, the second entry is -1 for boundary edges.  For an
    interior edge the first triangle plays the role of T_+ and ``normals``
    is the unit normal pointing from T_+ into T_-.
    """

    edges: np.ndarray
    triangle_edges: np.ndarray
    edge_triangles: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    diameters: np.ndarray

    @property
    def is_interior(self):
        return self.edge_triangles[:, 1] >= 0

    @cached_property
    def interior(self):
        return np.flatnonzero(self.is_interior)

    @cached_property
    def boundary(self):
        return np.flatnonzero(~self.is_interior)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D simplicial mesh.

    Use :func:`build_mesh` to construct one from raw data; the constructor
    itself performs no validation.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    geometry: str = "polygonal"

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64)))
        object.__setattr__(self, "boundary", _readonly(np.asarray(self.boundary, dtype=bool)))
        if self.geometry not in GEOMETRIES:
            raise MeshError(f"unknown geometry {self.geometry!r}")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def interior_vertices(self):
        return np.flatnonzero(~self.boundary)

    @property
    def n_dofs(self):
        """Number of free (interior) vertices."""
        return int(np.count_nonzero(~self.boundary))

    @property
    def refinement_edges(self):
        """Vertex pairs of the refinement edge of every triangle."""
        return self.triangles[:, 1:]

    @cached_property
    def areas(self):
        return _readonly(_signed_areas(self.vertices, self.triangles))

    @cached_property
    def grad_lambda(self):
        """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        g = np.empty((self.n_triangles, 3, 2))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            # rotate the opposite edge by -90 degrees
            g[:, k, 0] = a[:, 1] - b[:, 1]
            g[:, k, 1] = b[:, 0] - a[:, 0]
        g /= (2.0 * self.areas)[:, None, None]
        return _readonly(g)

    @cached_property
    def edge_data(self):
        return edge_topology(self)

    @property
    def diameters(self):
        return self.edge_data.diameters

    def boundary_triangle_edges(self):
        """Map boundary triangles to their boundary edges.

        Returns ``(tri, local_edge)`` arrays, one entry per boundary edge.
        """
        ed = self.edge_data
        b = ed.boundary
        tri = ed.edge_triangles[b, 0]
        local = np.argmax(ed.triangle_edges[tri] == b[:, None], axis=1)
        return tri, local

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)


def _rotate_longest_first(vertices, triangles):
    """Cyclically rotate triangles so the longest edge is opposite vertex 0.

    Ties are broken by the smallest opposite-vertex index.
    """
    p = vertices[triangles]
    lengths = np.stack(
        [np.hypot(*(p[:, (k + 2) % 3] - p[:, (k + 1) % 3]).T) for k in range(3)], axis=1
    )
    longest = lengths.max(axis=1, keepdims=True)
    tied = lengths >= longest * (1.0 - 1e-12)
    key = np.where(tied, triangles, np.iinfo(np.int64).max)
    k = np.argmin(key, axis=1)
    idx = (k[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def build_mesh(coords, triangle_list, geometry="polygonal", refinement="longest"):
    """Validate raw data and build a :class:`Mesh`.

    Parameters
    ----------
    coords : array_like, shape (V, 2)
    triangle_list : array_like of int, shape (T, 3)
        Vertex indices (0-based).  Clockwise triangles are reoriented.
    geometry : {"polygonal", "unit_circle"}
        With ``"unit_circle"`` new boundary vertices created by refinement
        are projected radially onto the unit circle.
    refinement : {"longest", "first"}
        ``"longest"`` puts the refinement edge on the longest edge;
        ``"first"`` keeps the edge opposite the first listed vertex.
    """
    vertices = np.asarray(coords, dtype=float)
    triangles = np.asarray(triangle_list)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("coords must have shape (V, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
        raise MeshError("triangle_list must have shape (T, 3) with T >= 1")
    if not np.issubdtype(triangles.dtype, np.integer):
        if not np.all(np.equal(np.mod(triangles, 1), 0)):
            raise MeshError("triangle indices must be integers")
    triangles = triangles.astype(np.int64)
    nv = len(vertices)
    if triangles.min() < 0 or triangles.max() >= nv:
        raise MeshError(f"triangle index out of range [0, {nv})")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinates")
    if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(triangles[:, 1] == triangles[:, 2]) \
            or np.any(triangles[:, 0] == triangles[:, 2]):
        raise MeshError("triangle with repeated vertex")

    diam = float(np.max(np.ptp(vertices, axis=0))) if nv > 1 else 0.0
    if nv > 1 and cKDTree(vertices).query_pairs(1e-12 * max(diam, 1.0)):
        raise MeshError("duplicate vertices within tolerance")

    area = _signed_areas(vertices, triangles)
    scale = max(diam, 1e-300) ** 2
    if np.any(np.abs(area) <= 1e-14 * scale):
        raise MeshError("degenerate triangle (zero area)")
    triangles = triangles.copy()
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    if refinement == "longest":
        triangles = _rotate_longest_first(vertices, triangles)
    elif refinement != "first":
        raise MeshError(f"unknown refinement-edge rule {refinement!r}")

    local = np.sort(triangles[:, [1, 2, 2, 0, 0, 1]].reshape(-1, 2), axis=1)
    _, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-conforming input: edge shared by more than two triangles")
    inverse = inverse.reshape(-1)
    edge_boundary = counts[inverse] == 1
    boundary = np.zeros(nv, dtype=bool)
    boundary[local[edge_boundary].ravel()] = True
    used = np.zeros(nv, dtype=bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise MeshError("vertex not referenced by any triangle")
    return Mesh(vertices, triangles, boundary, geometry)


def edge_topology(mesh):
    """Classify edges and compute lengths, normals and triangle diameters."""
    t = mesh.triangles
    nt = len(t)
    local = t[:, [1, 2, 2, 0, 0, 1]].reshape(-1, 2)
    key = np.sort(local, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(nt, 3)
    ne = len(edges)

    owner = np.repeat(np.arange(nt), 3)
    flat = inverse.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_edges = flat[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = sorted_edges[1:] != sorted_edges[:-1]
    edge_triangles = -np.ones((ne, 2), dtype=np.int64)
    edge_triangles[sorted_edges[first], 0] = owner[order][first]
    second = ~first
    if np.any(np.bincount(sorted_edges, minlength=ne) > 2):
        raise MeshError("non-conforming mesh: edge shared by more than two triangles")
    edge_triangles[sorted_edges[second], 1] = owner[order][second]

    p = mesh.vertices
    vec = p[edges[:, 1]] - p[edges[:, 0]]
    lengths = np.hypot(vec[:, 0], vec[:, 1])
    normals = np.stack([vec[:, 1], -vec[:, 0]], axis=1) / lengths[:, None]
    # orient from T_+ (first triangle) outward, i.e. into T_-
    plus = edge_triangles[:, 0]
    c = p[t[plus]].mean(axis=1)
    outward = np.einsum("ij,ij->i", normals, p[edges[:, 0]] - c) > 0
    normals[~outward] *= -1.0

    diameters = lengths[inverse].max(axis=1)
    return EdgeSet(
        edges=_readonly(edges),
        triangle_edges=_readonly(inverse),
        edge_triangles=_readonly(edge_triangles),
        lengths=_readonly(lengths),
        normals=_readonly(normals),
        diameters=_readonly(diameters),
    )


def refine(mesh, marked, max_closure=None, all_edges=False):
    """Newest vertex bisection with conforming closure.

    With ``all_edges`` every edge of a marked triangle is bisected (each
    marked triangle is split into four), otherwise only its refinement edge.

    Returns
    -------
    new_mesh : Mesh
    parents : ndarray, shape (V_new - V_old, 2)
        Endpoints of the bisected edge for every newly created vertex.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_triangles):
        raise IndexError("marked triangle index out of range")
    ed = mesh.edge_data
    te = ed.triangle_edges
    ref = te[:, 0]
    ne = len(ed.edges)
    if marked.size == 0:
        return mesh, np.zeros((0, 2), dtype=np.int64)

    flagged = np.zeros(ne, dtype=bool)
    flagged[te[marked] if all_edges else ref[marked]] = True
    bound = ne + 1 if max_closure is None else max_closure
    for _ in range(bound):
        need = flagged[te].any(axis=1) & ~flagged[ref]
        if not need.any():
            break
        flagged[ref[need]] = True
    else:
        raise RuntimeError("refinement closure did not terminate; inconsistent refinement edges")

    nv = mesh.n_vertices
    split = np.flatnonzero(flagged)
    new_index = -np.ones(ne, dtype=np.int64)
    new_index[split] = nv + np.arange(len(split))
    parents = ed.edges[split]
    mid = 0.5 * (mesh.vertices[parents[:, 0]] + mesh.vertices[parents[:, 1]])
    on_boundary = ~ed.is_interior[split]
    if mesh.geometry == "unit_circle" and on_boundary.any():
        r = np.hypot(mid[on_boundary, 0], mid[on_boundary, 1])
        mid[on_boundary] /= r[:, None]
    vertices = np.concatenate([mesh.vertices, mid])
    boundary = np.concatenate([mesh.boundary, on_boundary])

    t = mesh.triangles
    bis = flagged[ref]
    keep = t[~bis]
    p, a, b = t[bis].T
    m = new_index[ref[bis]]
    e_pa = te[bis, 2]
    e_bp = te[bis, 1]

    left = np.stack([m, p, a], axis=1)
    right = np.stack([m, b, p], axis=1)
    s1 = flagged[e_pa]
    s2 = flagged[e_bp]
    q1 = new_index[e_pa[s1]]
    q2 = new_index[e_bp[s2]]
    ls, rs = left[s1], right[s2]
    children = [
        keep,
        left[~s1],
        np.stack([q1, ls[:, 0], ls[:, 1]], axis=1),
        np.stack([q1, ls[:, 2], ls[:, 0]], axis=1),
        right[~s2],
        np.stack([q2, rs[:, 0], rs[:, 1]], axis=1),
        np.stack([q2, rs[:, 2], rs[:, 0]], axis=1),
    ]
    triangles = np.concatenate(children, axis=0)
    return Mesh(vertices, triangles, boundary, mesh.geometry), parents


def bisect(mesh, marked):
    """Refine the marked triangles by newest vertex bisection."""
    return refine(mesh, marked)[0]


def uniform_refine(mesh, times=1):
    for _ in range(times):
        mesh = bisect(mesh, np.arange(mesh.n_triangles))
    return mesh


def angles(mesh):
    """Interior angles in degrees, shape (T, 3)."""
    p = mesh.vertices[mesh.triangles]
    out = np.empty((mesh.n_triangles, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (np.hypot(*u.T) * np.hypot(*v.T))
        out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


def min_angle(mesh):
    return float(angles(mesh).min())


def is_conforming(mesh):
    """Edge-incidence check: no edge has more than two triangles and V - E + T = 1."""
    try:
        ed = edge_topology(mesh)
    except MeshError:
        return False
    return mesh.n_vertices - len(ed.edges) + mesh.n_triangles == 1


# -- simple generators --------------------------------------------------------

def unit_square_two_triangles():
    coords = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    return build_mesh(coords, [(0, 1, 2), (0, 2, 3)])


def criss_cross_square():
    """Unit square split into four triangles around its center (vertex 4)."""
    coords = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]
    return build_mesh(coords, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


def unit_disk_mesh(bisections=4):
    """Inscribed square fan of the unit disk refined by uniform bisection.

    The four right isosceles triangles are bisected ``bisections`` times;
    new boundary vertices are projected onto the circle.  The default
    gives 16 boundary vertices and 64 triangles.
    """
    coords = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    tris = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 1)]
    mesh = build_mesh(coords, tris, geometry="unit_circle")
    return uniform_refine(mesh, bisections)


# -- plain text I/O -----------------------------------------------------------

def write_mesh(mesh, path):
    """Write ``V T`` header, vertex lines ``x y flag`` and triangle lines ``i j k``.

    Triangles are written peak first, so reading back with the default
    ``refinement="first"`` reproduces the mesh exactly.
    """
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    for (x, y), flag in zip(mesh.vertices, mesh.boundary):
        lines.append(f"{x:.17g} {y:.17g} {int(flag)}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, geometry="polygonal", refinement="first"):
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip()]
    try:
        nv, nt = int(tokens[0][0]), int(tokens[0][1])
        vrows = tokens[1:1 + nv]
        trows = tokens[1 + nv:1 + nv + nt]
        coords = np.array([(float(r[0]), float(r[1])) for r in vrows])
        flags = np.array([int(r[2]) for r in vrows], dtype=bool)
        tris = np.array([(int(r[0]), int(r[1]), int(r[2])) for r in trows], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(coords) != nv or len(tris) != nt:
        raise MeshError(f"malformed mesh file {path}: expected {nv} vertices and {nt} triangles")
    mesh = build_mesh(coords, tris, geometry=geometry, refinement=refinement)
    if not np.array_equal(mesh.boundary, flags):
        raise MeshError(f"boundary flags in {path} disagree with edge incidence")
    return mesh
