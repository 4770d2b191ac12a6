"""Command line front end.

Subcommands::

    obstacle-afem disk     [options]              adaptive disk benchmark
    obstacle-afem uniform  [options]              same problem, every element marked
    obstacle-afem solve    MESH CONFIG [options]  single solve + estimate

Exit status is 0 on success, 1 on invalid input and 2 when the discrete
solver fails.
"""
import argparse
import math
import os
import sys

import numpy as np

from . import driver
from .estimator import AREA_DEGREE, CHI_DEGREE, EDGE_DEGREE, MODES, total_estimator
from .mesh import GEOMETRIES, MeshError, read_mesh, unit_disk_mesh, write_mesh
from .problem import ProblemData
from .solver import SolverError, solve_obstacle
from .space import ScalarField


class InputError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# -- problem configuration ----------------------------------------------------

def _numbers(spec, name, count=None):
    try:
        vals = [float(v) for v in spec.split(",")] if spec.strip() else []
    except ValueError:
        raise InputError(f"{name}: coefficients must be numbers, got {spec!r}") from None
    if count is not None and len(vals) not in count:
        raise InputError(f"{name}: expected {' or '.join(map(str, count))} coefficients, got {len(vals)}")
    return vals


def _quadratic_bowl(a=1.0, b=2.0, cx=0.0, cy=0.0):
    """a - b * |x - c|^2."""
    def value(x, y):
        return a - b * ((x - cx) ** 2 + (y - cy) ** 2)

    def grad(x, y):
        return np.stack([-2.0 * b * (x - cx), -2.0 * b * (y - cy)], axis=-1)

    return ScalarField(value, grad, name=f"quadratic_bowl:{a!r},{b!r},{cx!r},{cy!r}")


def builtin_field(text):
    """Parse a field description such as ``constant:-12`` or ``linear:1,0,2``."""
    name, _, args = text.strip().partition(":")
    name = name.strip()
    disk = driver.disk_problem()
    if name == "constant":
        (c,) = _numbers(args, name, (1,))
        return ScalarField.constant(c)
    if name == "linear":
        return ScalarField.affine(*_numbers(args, name, (3,)))
    if name == "quadratic_bowl":
        return _quadratic_bowl(*_numbers(args, name, (0, 1, 2, 4)))
    if name in ("disk_load", "disk_obstacle", "disk_exact"):
        if args.strip():
            raise InputError(f"{name} takes no coefficients")
        return {"disk_load": disk.f, "disk_obstacle": disk.chi, "disk_exact": disk.exact}[name]
    raise InputError(f"unknown field {name!r}; expected constant, linear, quadratic_bowl, "
                     "disk_load, disk_obstacle or disk_exact")


CONFIG_KEYS = ("f", "chi", "g", "exact", "geometry")


def parse_config(text):
    """Parse ``key = value`` lines (``#`` comments) into a :class:`ProblemData`."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not value.strip():
            raise InputError(f"config line {lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        if key in entries:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    missing = [k for k in ("f", "chi", "g") if k not in entries]
    if missing:
        raise InputError(f"config is missing {', '.join(missing)}")
    geometry = entries.get("geometry", "polygonal")
    if geometry not in GEOMETRIES:
        raise InputError(f"unknown geometry {geometry!r}")
    exact = builtin_field(entries["exact"]) if "exact" in entries else None
    return ProblemData(builtin_field(entries["f"]), builtin_field(entries["chi"]),
                       builtin_field(entries["g"]), exact, geometry, name="config")


# -- SVG ----------------------------------------------------------------------

LOW_COLOR = (49, 54, 149)
HIGH_COLOR = (215, 48, 39)
WIRE_FILL = "#ffffff"


def _color(t):
    rgb = [round(lo + t * (hi - lo)) for lo, hi in zip(LOW_COLOR, HIGH_COLOR)]
    return "#%02x%02x%02x" % tuple(rgb)


def write_svg(mesh, values=None, path="mesh.svg", size=800):
    """Write the mesh as SVG 1.1, one polygon per triangle, optionally colored by ``values``."""
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_triangles,):
            raise ValueError(f"expected {mesh.n_triangles} element values, got {values.shape}")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.02 * span
    scale = size / (span + 2 * pad)

    def xy(p):
        return "%.4f,%.4f" % ((p[0] - lo[0] + pad) * scale, (hi[1] - p[1] + pad) * scale)

    width = (hi[0] - lo[0] + 2 * pad) * scale
    height = (hi[1] - lo[1] + 2 * pad) * scale
    out = ['<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
           '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
           'width="%.4f" height="%.4f" viewBox="0 0 %.4f %.4f">' % (width, height, width, height)]
    if values is None:
        out.append("<!-- wireframe: no element values -->")
        fills = [WIRE_FILL] * mesh.n_triangles
    else:
        vmin, vmax = float(values.min()), float(values.max())
        out.append("<!-- color map: linear from %s at %.17g to %s at %.17g -->"
                   % (_color(0.0), vmin, _color(1.0), vmax))
        rel = np.zeros_like(values) if vmax == vmin else (values - vmin) / (vmax - vmin)
        fills = [_color(float(t)) for t in rel]
    out.append('<g stroke="#000000" stroke-width="0.5" stroke-linejoin="round">')
    for tri, fill in zip(mesh.triangles, fills):
        pts = " ".join(xy(mesh.vertices[k]) for k in tri)
        out.append(f'<polygon points="{pts}" fill="{fill}"/>')
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


# -- commands -----------------------------------------------------------------

class Snapshots:
    """Parsed ``--snapshot-levels``: explicit levels plus the ``all`` / ``last`` keywords."""

    def __init__(self, text):
        self.levels, self.all, self.last = set(), False, False
        for item in (text or "").split(","):
            item = item.strip()
            if not item:
                continue
            if item == "all":
                self.all = True
            elif item == "last":
                self.last = True
            else:
                try:
                    level = int(item)
                except ValueError:
                    raise InputError("--snapshot-levels expects integers, 'all' or 'last', "
                                     f"got {item!r}") from None
                if level < 0:
                    raise InputError("--snapshot-levels must be non-negative")
                self.levels.add(level)

    def wants(self, level):
        return self.all or level in self.levels


def _snapshot(out, level, mesh, values):
    write_svg(mesh, values, os.path.join(out, f"mesh_{level}.svg"))
    write_mesh(mesh, os.path.join(out, f"mesh_{level}.txt"))


def _common(p):
    p.add_argument("--mode", choices=MODES, default="simplified")
    p.add_argument("--out", default=".", help="output directory (created if needed)")
    p.add_argument("--snapshot-levels", default=None,
                   help="levels to write mesh_L.svg / mesh_L.txt for: 'all', 'last' or e.g. 0,3,7")
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducible fixtures")
    p.add_argument("--area-degree", type=int, default=AREA_DEGREE)
    p.add_argument("--chi-degree", type=int, default=CHI_DEGREE)
    p.add_argument("--edge-degree", type=int, default=EDGE_DEGREE)
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = _Parser(prog="obstacle-afem", description="Adaptive P1 FEM for obstacle problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("disk", "uniform"):
        p = sub.add_parser(name, help="unit-disk benchmark" + (" with uniform marking" if name == "uniform" else ""))
        if name == "disk":
            p.add_argument("--theta", type=float, default=0.3)
        p.add_argument("--max-dofs", type=int, default=driver.DEFAULT_MAX_DOFS)
        p.add_argument("--max-levels", type=int, default=None)
        p.add_argument("--refinement", choices=driver.REFINEMENTS, default="bisec3")
        _common(p)
    p = sub.add_parser("solve", help="solve and estimate on a given mesh")
    p.add_argument("mesh")
    p.add_argument("config")
    _common(p)
    return parser


def _validate(args):
    if getattr(args, "theta", 1.0) is not None:
        theta = getattr(args, "theta", 1.0)
        if not (0.0 < theta <= 1.0) or math.isnan(theta):
            raise InputError(f"--theta must lie in (0, 1], got {theta}")
    for name in ("area_degree", "chi_degree", "edge_degree"):
        if getattr(args, name) < 1:
            raise InputError(f"--{name.replace('_', '-')} must be >= 1")
    if getattr(args, "max_levels", None) is not None and args.max_levels < 0:
        raise InputError("--max-levels must be >= 0")


def _run_adaptive(args, theta):
    mesh = unit_disk_mesh()
    if args.max_dofs < mesh.n_dofs:
        raise InputError(f"--max-dofs {args.max_dofs} is below the initial {mesh.n_dofs} DOFs")
    snaps = Snapshots(args.snapshot_levels)
    os.makedirs(args.out, exist_ok=True)
    pending = {}

    def on_level(level, mesh, sol, est, marked):
        if snaps.wants(level):
            _snapshot(args.out, level, mesh, est.indicators)
        elif snaps.last:
            pending["last"] = (level, mesh, est.indicators)
        else:
            pending.clear()
        if not args.quiet:
            print(f"level {level}: ndof={mesh.n_dofs} total={est.total:.6e}", file=sys.stderr)

    history = driver.adaptive_loop(driver.disk_problem(), mesh, theta=theta, max_dofs=args.max_dofs,
                                   mode=args.mode, max_levels=args.max_levels, keep=False,
                                   area_degree=args.area_degree, chi_degree=args.chi_degree,
                                   edge_degree=args.edge_degree, callback=on_level,
                                   refinement=args.refinement)
    if "last" in pending and pending["last"][0] == history.levels[-1].level:
        _snapshot(args.out, *pending["last"])
    history.to_csv(os.path.join(args.out, "history.csv"))
    last = history.levels[-1]
    print(f"levels={len(history.levels)} ndof={last.ndof} error={last.error:.6e} "
          f"total={last.total:.6e} efficiency={last.efficiency:.4f}")


def _run_solve(args):
    try:
        with open(args.config) as fh:
            problem = parse_config(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    try:
        mesh = read_mesh(args.mesh, geometry=problem.geometry)
    except OSError as exc:
        raise InputError(f"cannot read mesh: {exc}") from None
    except MeshError as exc:
        raise InputError(str(exc)) from None
    if mesh.n_dofs == 0:
        raise InputError("mesh has no interior vertex")
    try:
        problem.check_compatibility(mesh)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.mode == "general" and problem.chi.grad is None:
        raise InputError("general mode needs an obstacle with a gradient")
    sol = solve_obstacle(problem, mesh)
    est = total_estimator(mesh, problem, sol, mode=args.mode, area_degree=args.area_degree,
                          chi_degree=args.chi_degree, edge_degree=args.edge_degree)
    error = None
    if problem.exact is not None and problem.exact.grad is not None:
        error = driver.exact_energy_error(problem.exact, sol.u, mesh)
    history = driver.AdaptHistory(mode=args.mode, theta=1.0)
    history.levels.append(driver.LevelRecord(0, mesh.n_dofs, mesh.n_triangles, error,
                                             dict(est.parts_sq), est.total, 0, 0.0, sol.iterations))
    os.makedirs(args.out, exist_ok=True)
    history.to_csv(os.path.join(args.out, "history.csv"))
    snaps = Snapshots(args.snapshot_levels)
    if snaps.wants(0) or snaps.last:
        _snapshot(args.out, 0, mesh, est.indicators)
    if mesh.n_dofs <= 20:
        for z in mesh.interior_vertices:
            x, y = mesh.vertices[z]
            print(f"u_h({x:.17g}, {y:.17g}) = {sol.u[z]:.17g}")
    print(f"ndof={mesh.n_dofs} pdas_iterations={sol.iterations} active={len(sol.active)} "
          f"total={est.total:.6e}" + ("" if error is None else f" error={error:.6e}"))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        if args.command == "disk":
            _run_adaptive(args, args.theta)
        elif args.command == "uniform":
            _run_adaptive(args, 1.0)
        else:
            _run_solve(args)
    except InputError as exc:
        print(f"obstacle-afem: error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"obstacle-afem: solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
