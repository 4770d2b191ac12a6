"""Adaptive P1 finite elements for the obstacle problem with inhomogeneous Dirichlet data."""
from .mesh import (Mesh, MeshError, build_mesh, criss_cross_square, read_mesh, refine,
                   uniform_refine, unit_disk_mesh, unit_square_two_triangles, write_mesh)
from .space import ScalarField, nodal_interpolate
from .problem import ProblemData
from .solver import PdasParams, SolverError, brute_force_obstacle, solve_obstacle
from .multiplier import classify_elements, compute_sigma_h
from .estimator import EstimatorBreakdown, total_estimator
from .driver import AdaptHistory, adaptive_loop, disk_benchmark, disk_problem, doerfler_mark

__all__ = ["Mesh", "MeshError", "build_mesh", "criss_cross_square", "read_mesh", "refine",
           "uniform_refine", "unit_disk_mesh", "unit_square_two_triangles", "write_mesh",
           "ScalarField", "nodal_interpolate", "ProblemData", "PdasParams", "SolverError",
           "brute_force_obstacle", "solve_obstacle", "classify_elements", "compute_sigma_h",
           "EstimatorBreakdown", "total_estimator", "AdaptHistory", "adaptive_loop",
           "disk_benchmark", "disk_problem", "doerfler_mark"]

__version__ = "0.1.0"
