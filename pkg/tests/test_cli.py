import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from obstacle_afem import cli
from obstacle_afem.driver import CSV_COLUMNS, disk_benchmark
from obstacle_afem.mesh import criss_cross_square, read_mesh, write_mesh
from obstacle_afem.solver import SolverError

SVG_NS = "{http://www.w3.org/2000/svg}"


def _polygons(path):
    root = ET.parse(path).getroot()
    assert root.tag == SVG_NS + "svg" and root.get("version") == "1.1"
    return root.findall(f".//{SVG_NS}polygon")


def _read_csv(path):
    lines = path.read_bytes().decode("ascii").split("\n")
    assert lines[-1] == ""
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:-1]]
    return header, rows


@pytest.fixture
def cc_files(tmp_path):
    mesh = tmp_path / "cc.txt"
    write_mesh(criss_cross_square(), mesh)
    cfg = tmp_path / "problem.cfg"
    cfg.write_text("# criss-cross contact example\nf = constant:-12\nchi = constant:-0.5\ng = constant:0\n")
    return mesh, cfg


# -- disk / uniform ------------------------------------------------------------------

def test_disk_history_schema(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["disk", "--theta", "0.3", "--max-dofs", "2000", "--mode", "simplified",
                     "--out", str(out), "--quiet"]) == 0
    header, rows = _read_csv(out / "history.csv")
    assert header == list(CSV_COLUMNS)
    ndof = [int(r["ndof"]) for r in rows]
    assert all(b > a for a, b in zip(ndof, ndof[1:]))
    assert ndof[-1] >= 2000


def test_disk_matches_library_history(tmp_path):
    assert cli.main(["disk", "--max-dofs", "1000", "--out", str(tmp_path), "--quiet"]) == 0
    expect = disk_benchmark(theta=0.3, max_dofs=1000).to_csv_text()
    assert (tmp_path / "history.csv").read_text() == expect


def test_csv_number_format(tmp_path):
    assert cli.main(["disk", "--max-dofs", "500", "--out", str(tmp_path), "--quiet"]) == 0
    _, rows = _read_csv(tmp_path / "history.csv")
    for r in rows:
        assert re.fullmatch(r"\d+", r["level"]) and re.fullmatch(r"\d+", r["marked"])
        for key in ("error", "total", "efficiency", "eta_f"):
            assert "," not in r[key]
            float(r[key])
            mantissa = r[key].split("e")[0].replace("-", "").replace(".", "").lstrip("0")
            assert len(mantissa) <= 17


@pytest.mark.parametrize("theta", ["1.5", "0", "-0.2", "nan"])
def test_bad_theta_exit_1(theta, tmp_path, capsys):
    assert cli.main(["disk", "--theta", theta, "--out", str(tmp_path)]) == 1
    assert "theta" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["disk", "--bogus"], ["nonsense"], [],
                                  ["disk", "--max-dofs", "3"], ["disk", "--mode", "fancy"],
                                  ["disk", "--snapshot-levels", "x"], ["disk", "--area-degree", "0"]])
def test_bad_input_exit_1(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("obstacle-afem: error")


def test_uniform_marks_everything(tmp_path):
    assert cli.main(["uniform", "--max-dofs", "2000", "--out", str(tmp_path), "--quiet"]) == 0
    _, rows = _read_csv(tmp_path / "history.csv")
    ndof = [int(r["ndof"]) for r in rows]
    assert ndof[:4] == [25, 113, 481, 1985]


def test_snapshots_written(tmp_path):
    assert cli.main(["disk", "--max-levels", "3", "--snapshot-levels", "0,3", "--out", str(tmp_path),
                     "--quiet"]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == \
        ["history.csv", "mesh_0.svg", "mesh_0.txt", "mesh_3.svg", "mesh_3.txt"]
    level3 = read_mesh(tmp_path / "mesh_3.txt", geometry="unit_circle")
    assert len(_polygons(tmp_path / "mesh_3.svg")) == level3.n_triangles
    ref = disk_benchmark(theta=0.3, max_levels=3)
    assert level3.n_triangles == ref.meshes[3].n_triangles
    np.testing.assert_array_equal(level3.vertices, ref.meshes[3].vertices)


def test_snapshot_last(tmp_path):
    assert cli.main(["disk", "--max-levels", "2", "--snapshot-levels", "last", "--out", str(tmp_path),
                     "--quiet"]) == 0
    assert (tmp_path / "mesh_2.svg").exists() and not (tmp_path / "mesh_1.svg").exists()


def test_rerun_is_bit_identical(tmp_path):
    args = ["disk", "--max-dofs", "800", "--snapshot-levels", "all", "--out", str(tmp_path), "--quiet"]
    assert cli.main(args) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert cli.main(args) == 0
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second and len(first) > 3


def test_solver_failure_exit_2(tmp_path, monkeypatch, capsys):
    def failing(*args, **kwargs):
        raise SolverError("active set cycling")

    monkeypatch.setattr("obstacle_afem.driver.solve_obstacle", failing)
    assert cli.main(["disk", "--max-dofs", "100", "--out", str(tmp_path)]) == 2
    assert "solver failure" in capsys.readouterr().err


# -- solve -----------------------------------------------------------------------------

def test_solve_criss_cross_prints_center(cc_files, tmp_path, capsys):
    mesh, cfg = cc_files
    assert cli.main(["solve", str(mesh), str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "u_h(0.5, 0.5) = -0.5\n" in out
    _, rows = _read_csv(tmp_path / "o" / "history.csv")
    assert len(rows) == 1 and rows[0]["ndof"] == "1" and rows[0]["error"] == "nan"


def test_solve_general_mode(cc_files, tmp_path):
    mesh, cfg = cc_files
    assert cli.main(["solve", str(mesh), str(cfg), "--mode", "general", "--out", str(tmp_path)]) == 0


def test_solve_with_exact_solution(tmp_path, capsys):
    mesh = tmp_path / "cc.txt"
    write_mesh(criss_cross_square(), mesh)
    cfg = tmp_path / "p.cfg"
    cfg.write_text("f = constant:0\nchi = constant:-5\ng = linear:1,2,3\nexact = linear:1,2,3\n")
    assert cli.main(["solve", str(mesh), str(cfg), "--out", str(tmp_path)]) == 0
    assert "error=0.000000e+00" in capsys.readouterr().out


def test_solve_missing_files(tmp_path, cc_files):
    mesh, cfg = cc_files
    assert cli.main(["solve", str(tmp_path / "none.txt"), str(cfg), "--out", str(tmp_path)]) == 1
    assert cli.main(["solve", str(mesh), str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 1


def test_solve_incompatible_data(tmp_path, cc_files):
    mesh, _ = cc_files
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("f = constant:0\nchi = constant:1\ng = constant:0\n")
    assert cli.main(["solve", str(mesh), str(cfg), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("text", ["f = constant:1\nchi = constant:0\n",
                                  "f = constant:1\nf = constant:2\nchi = constant:0\ng = constant:0\n",
                                  "f = constant:1\nchi = constant:0\ng = constant:0\nh = constant:0\n",
                                  "f = cosine\nchi = constant:0\ng = constant:0\n",
                                  "f = linear:1,2\nchi = constant:0\ng = constant:0\n",
                                  "f constant:1\n"])
def test_config_errors(text):
    with pytest.raises(cli.InputError):
        cli.parse_config(text)


def test_builtin_fields():
    bowl = cli.builtin_field("quadratic_bowl")
    assert bowl(0.5, 0.0) == pytest.approx(0.5)
    shifted = cli.builtin_field("quadratic_bowl:2,1,0.5,0.5")
    assert shifted(0.5, 0.5) == 2.0 and shifted(1.5, 0.5) == pytest.approx(1.0)
    assert cli.builtin_field("linear:1,2,3")(1.0, 1.0) == 6.0
    assert cli.builtin_field("constant:-12")(0.3, 0.1) == -12.0
    assert cli.builtin_field("disk_exact")(0.0, 0.0) == 1.0


# -- SVG -------------------------------------------------------------------------------

def test_svg_wireframe_criss_cross(tmp_path):
    path = tmp_path / "cc.svg"
    cli.write_svg(criss_cross_square(), None, path)
    polys = _polygons(path)
    assert len(polys) == 4
    assert len({p.get("fill") for p in polys}) == 1
    assert "wireframe" in path.read_text()


def test_svg_equal_values_share_fill(tmp_path):
    path = tmp_path / "eq.svg"
    cli.write_svg(criss_cross_square(), np.full(4, 0.7), path)
    assert len({p.get("fill") for p in _polygons(path)}) == 1
    assert "color map: linear" in path.read_text()


def test_svg_extremes_colored(tmp_path):
    path = tmp_path / "v.svg"
    cli.write_svg(criss_cross_square(), np.array([0.0, 1.0, 0.5, 0.25]), path)
    fills = [p.get("fill") for p in _polygons(path)]
    assert fills[0] == "#313695" and fills[1] == "#d73027" and len(set(fills)) == 4


def test_svg_deterministic(tmp_path):
    values = np.linspace(0, 1, 4)
    cli.write_svg(criss_cross_square(), values, tmp_path / "a.svg")
    cli.write_svg(criss_cross_square(), values, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_svg_wrong_length(tmp_path):
    with pytest.raises(ValueError):
        cli.write_svg(criss_cross_square(), np.ones(3), tmp_path / "x.svg")


def test_svg_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        cli.write_svg(criss_cross_square(), None, tmp_path / "missing" / "x.svg")


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "obstacle_afem", "disk", "--theta", "2"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 1 and "theta" in res.stderr
