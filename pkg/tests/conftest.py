import numpy as np
import pytest
from scipy.spatial import Delaunay

from obstacle_afem.mesh import build_mesh, criss_cross_square, unit_disk_mesh
from obstacle_afem.problem import ProblemData
from obstacle_afem.space import ScalarField

# filled by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def bowl(a, b, cx=0.0, cy=0.0):
    """a - b |x - c|^2 with its gradient."""
    return ScalarField(lambda x, y: a - b * ((x - cx) ** 2 + (y - cy) ** 2),
                       lambda x, y: np.stack([-2 * b * (x - cx), -2 * b * (y - cy)], axis=-1))


def random_square_mesh(rng, n_interior):
    """Delaunay mesh of the unit square with ``n_interior`` random interior points."""
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    sides = np.array([[0.5, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]])
    while True:
        inner = 0.1 + 0.8 * rng.random((n_interior, 2))
        pts = np.concatenate([corners, sides, inner])
        tri = Delaunay(pts).simplices
        try:
            mesh = build_mesh(pts, tri)
        except ValueError:
            continue
        if mesh.n_dofs == n_interior and np.min(mesh.areas) > 1e-4:
            return mesh


def random_problem(rng, mesh):
    """Random affine load / boundary data and a bowl obstacle below g on the boundary."""
    f = ScalarField.affine(*rng.uniform(-20, 20, 3))
    g = ScalarField.affine(*rng.uniform(-1, 1, 3))
    b = rng.uniform(0.5, 4.0)
    cx, cy = rng.uniform(0.2, 0.8, 2)
    probe = mesh.vertices[mesh.boundary]
    dense = np.concatenate([probe, np.stack(np.meshgrid(np.linspace(0, 1, 41), [0.0, 1.0]), -1).reshape(-1, 2),
                            np.stack(np.meshgrid([0.0, 1.0], np.linspace(0, 1, 41)), -1).reshape(-1, 2)])
    slack = g.at(dense) + b * ((dense[:, 0] - cx) ** 2 + (dense[:, 1] - cy) ** 2)
    a = slack.min() - rng.uniform(0.0, 0.5)
    chi = bowl(a, b, cx, cy)
    return ProblemData(f, chi, g)


@pytest.fixture
def cc_mesh():
    return criss_cross_square()


@pytest.fixture
def cc_active_problem():
    return ProblemData(ScalarField.constant(-12.0), ScalarField.constant(-0.5), ScalarField.constant(0.0))


@pytest.fixture(scope="session")
def disk_mesh():
    return unit_disk_mesh()
