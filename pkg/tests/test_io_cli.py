import io as _io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import solved
from hexpde import cli, io
from hexpde.mesh import build_borehole_mesh, build_cube_mesh, build_staircase_mesh


def _same_mesh(a, b):
    assert a.domain_tag == b.domain_tag and a.params == b.params
    for name in ("nodes", "elements_q2", "boundary_nodes", "boundary_faces", "vertex_mask"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


@pytest.mark.parametrize("make", [lambda: build_cube_mesh(3), lambda: build_staircase_mesh(4),
                                  lambda: build_borehole_mesh(2, keep_hole_nodes=True)])
def test_mesh_roundtrip(make, tmp_path):
    m = make()
    io.write_mesh(m, tmp_path / "m.bin")
    _same_mesh(m, io.read_mesh(tmp_path / "m.bin"))


def test_mesh_file_errors(tmp_path):
    p = tmp_path / "m.bin"
    io.write_mesh(build_cube_mesh(2), p)
    raw = p.read_bytes()
    (tmp_path / "bad").write_bytes(b"NOTAMESH" + raw[8:])
    with pytest.raises(io.MeshFormatError, match="not a hexpde"):
        io.read_mesh(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-40])
    with pytest.raises(io.MeshFormatError):
        io.read_mesh(tmp_path / "short")
    (tmp_path / "long").write_bytes(raw + b"\0")
    with pytest.raises(io.MeshFormatError, match="trailing"):
        io.read_mesh(tmp_path / "long")


def test_text_dump(tmp_path):
    io.write_mesh_text(build_cube_mesh(2), tmp_path / "m.txt")
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[1] == "nodes 125" and lines[127] == "elements 8"


def _vtk_sections(path):
    lines = path.read_text().splitlines()
    out = {}
    for i, ln in enumerate(lines):
        head = ln.split()
        if head and head[0] in ("POINTS", "CELLS", "CELL_TYPES", "POINT_DATA", "CELL_DATA"):
            out[head[0]] = (int(head[1]), i)
    return lines, out


def test_vtk_zero_field(tmp_path):
    m = build_cube_mesh(2)
    io.export_vtk(m, tmp_path / "z.vtk", np.zeros(27))
    lines, sec = _vtk_sections(tmp_path / "z.vtk")
    assert sec["POINTS"][0] == 27 and sec["CELLS"][0] == 8 and sec["POINT_DATA"][0] == 27
    start = sec["POINT_DATA"][1] + 3
    assert all(float(v) == 0.0 for v in lines[start:start + 27])
    types = lines[sec["CELL_TYPES"][1] + 1: sec["CELL_TYPES"][1] + 9]
    assert set(types) == {"12"}


def test_vtk_cube32_range(tmp_path):
    s = solved("cube", 32)
    io.export_vtk(s.mesh, tmp_path / "u.vtk", s.u)
    lines, sec = _vtk_sections(tmp_path / "u.vtk")
    n, i = sec["POINT_DATA"]
    vals = np.array(lines[i + 3: i + 3 + n], dtype=float)
    assert vals.min() >= 0 and vals.max() <= 0.6


def test_vtk_staircase_cells(tmp_path):
    s = solved("staircase", 8)
    io.export_vtk(s.mesh, tmp_path / "s.vtk", s.u, np.ones(s.mesh.n_elements))
    _, sec = _vtk_sections(tmp_path / "s.vtk")
    assert sec["CELLS"][0] == 384 and sec["CELL_DATA"][0] == 384


def test_vtk_q2_field_and_shape_errors(tmp_path):
    s = solved("cube", 4, 2)
    io.export_vtk(s.mesh, tmp_path / "q2.vtk", s.u, degree=2)
    assert _vtk_sections(tmp_path / "q2.vtk")[1]["POINT_DATA"][0] == 125
    with pytest.raises(ValueError):
        io.export_vtk(s.mesh, tmp_path / "x.vtk", np.zeros(7))
    with pytest.raises(ValueError):
        io.export_vtk(s.mesh, tmp_path / "x.vtk", cell_field=np.zeros(7))


def test_vtk_unwritable(tmp_path):
    with pytest.raises(OSError):
        io.export_vtk(build_cube_mesh(2), tmp_path / "missing" / "x.vtk")


def test_line_sample_constant():
    m = build_staircase_mesh(4)
    t, v, ok = io.line_sample(m, np.ones(m.dofs(1)[0].shape[0]), "x", (-0.5, 0.3), 57)
    # this line crosses the missing octant for x < 0
    assert np.array_equal(ok, t >= 0)
    assert np.allclose(v[ok], 1.0, atol=1e-14)


def test_line_sample_symmetry():
    s = solved("cube", 8)
    t, v, ok = io.line_sample(s.mesh, s.u, "y", (0.3, -0.1), 41)
    assert ok.all()
    assert np.abs(v - v[::-1]).max() < 1e-10


def test_line_sample_interpolates_nodes():
    s = solved("cube", 8)
    t, v, _ = io.line_sample(s.mesh, s.u, "z", (0.25, 0.5), 9)
    coords = s.system.dof_coords
    for ti, vi in zip(t, v):
        j = np.flatnonzero(np.all(np.abs(coords - [0.25, 0.5, ti]) < 1e-12, axis=1))
        assert vi == pytest.approx(s.u[j[0]], abs=1e-12)


def test_line_sample_q2_continuous():
    s = solved("cube", 4, 2)
    t, v, _ = io.line_sample(s.mesh, s.u, "x", (0.1, 0.2), 401, degree=2)
    assert np.abs(np.diff(v)).max() < 0.01


def test_borehole_line_gap():
    s = solved("borehole", 2, 1, "minres-ic0")
    t, v, ok = io.line_sample(s.mesh, s.u, "x", (0.5, 0.0), 401)
    assert np.array_equal(~ok, np.abs(t) < 0.01 - 1e-12)
    assert np.all(np.isnan(v[~ok]))
    t, v, ok = io.line_sample(s.mesh, s.u, "x", (-0.5, 0.0), 401)
    assert ok.all()


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    rows = [(i, float(x), float(y)) for i, (x, y) in enumerate(rng.normal(size=(20, 2)) * 10.0 ** rng.integers(-8, 8, (20, 2)))]
    io.write_csv(tmp_path / "t.csv", ["i", "a", "b"], rows)
    header, back = io.read_csv(tmp_path / "t.csv")
    assert header == ["i", "a", "b"]
    for r, b in zip(rows, back):
        assert int(b[0]) == r[0]
        for x, y in zip(r[1:], b[1:]):
            assert float(y) == x
            assert float(f"{float(y):.15g}") == float(f"{x:.15g}")


# command line


def call(*argv):
    out = _io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def test_cli_solve_cube32():
    code, text = call("solve", "--problem", "cube", "--n", "32", "--degree", "q1", "--solver", "direct")
    assert code == 0
    assert "energy_sq 0.6439755" in text and "error 0.037636" in text


def test_cli_estimate_cube16():
    code, text = call("estimate", "--problem", "cube", "--n", "16", "--strategy", "q2h",
                      "--boundary-correction", "on")
    assert code == 0
    eta = float(text.split("eta[q2h]")[1].split()[0])
    assert eta == pytest.approx(0.075177, rel=0.02)
    theta = float(text.split("theta")[1].split()[0])
    assert theta == pytest.approx(1.0017, abs=0.02)


def test_cli_rejects_q2_estimation(capsys):
    code, _ = call("solve", "--degree", "q2", "--n", "4", "--estimate", "q2rh")
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("hexpde-error ")
    payload = json.loads(err[len("hexpde-error "):])
    assert payload["kind"] == "usage" and "estimation requires Q1" in payload["message"]


def test_cli_divergence_exit(capsys):
    code, _ = call("solve", "--n", "16", "--solver", "minres-ic0", "--maxit", "2")
    assert code == 3
    assert '"kind": "divergence"' in capsys.readouterr().err


def test_cli_mesh_failure_exit(capsys):
    code, _ = call("mesh", "--problem", "borehole", "--level", "2", "--eps", "0.5")
    assert code == 1
    assert capsys.readouterr().err.startswith("hexpde-error ")


def test_cli_mesh_outputs(tmp_path):
    code, text = call("mesh", "--problem", "staircase", "--n", "2", "--out", str(tmp_path / "s.bin"),
                      "--text", str(tmp_path / "s.txt"))
    assert code == 0 and "boundary_faces 22" in text.replace(":", "")
    m = io.read_mesh(tmp_path / "s.bin")
    assert m.n_elements == 6 and (tmp_path / "s.txt").exists()


def test_cli_borehole_mesh_summary():
    code, text = call("mesh", "--problem", "borehole", "--level", "2", "--keep-hole-nodes")
    assert code == 0
    assert "85833" in text and "aspect_ratio_hole" in text


def test_cli_amg_stats(tmp_path):
    code, text = call("amg-stats", "--n", "16", "--csv", str(tmp_path / "a.csv"))
    assert code == 0
    c1 = float([ln for ln in text.splitlines() if ln.split()[0] == "c_1"][0].split()[1])
    assert c1 == pytest.approx(16.49, abs=0.5)
    header, rows = io.read_csv(tmp_path / "a.csv")
    assert header == ["level", "n", "nnz"] and rows[0][1] == "4913"


def test_cli_convergence_table(tmp_path):
    code, text = call("convergence", "--problem", "manufactured", "--n", "4", "--levels", "2",
                      "--estimate", "q2h,q2rh", "--boundary-correction", "--csv", str(tmp_path / "c.csv"))
    assert code == 0
    header, rows = io.read_csv(tmp_path / "c.csv")
    assert header[:6] == ["n_e", "h", "dofs", "energy_sq", "error", "ratio"]
    assert "theta_q2rh" in header and len(rows) == 2 and rows[0][5] == ""
    assert float(rows[1][5]) > 1.5


def test_cli_convergence_needs_two_levels(capsys):
    assert call("convergence", "--levels", "1")[0] == 2


def test_cli_export(tmp_path):
    code, text = call("export", "--n", "8", "--vtk", str(tmp_path / "u.vtk"), "--line", "x",
                      "--at", "0,0", "--samples", "21", "--csv", str(tmp_path / "l.csv"))
    assert code == 0 and (tmp_path / "u.vtk").exists()
    header, rows = io.read_csv(tmp_path / "l.csv")
    assert header == ["x", "value", "inside"] and len(rows) == 21
    assert "gaps 0" in text


def test_cli_solve_outputs(tmp_path):
    code, _ = call("solve", "--n", "4", "--solver", "minres-amg", "--residuals", str(tmp_path / "r.csv"),
                   "--export-mm", str(tmp_path / "A.mtx"), "--vtk", str(tmp_path / "u.vtk"))
    assert code == 0
    header, rows = io.read_csv(tmp_path / "r.csv")
    assert header == ["iteration", "residual"] and len(rows) >= 2
    assert (tmp_path / "A.mtx").read_text().startswith("%%MatrixMarket")


def test_cli_config_file_flags_win(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 4, "solver": "minres-amg", "problem": "staircase"}))
    code, text = call("solve", "--config", str(cfg), "--n", "8")
    assert code == 0
    assert "elements 384" in text and "minres" in text.lower()
    cfg.write_text(json.dumps({"bogus": 1}))
    assert call("solve", "--config", str(cfg))[0] == 2


def test_cli_bad_flag_values():
    with pytest.raises(SystemExit):
        call("solve", "--degree", "q3")
    with pytest.raises(SystemExit):
        call("estimate", "--strategy", "q9")


def test_run_helper():
    out = _io.StringIO()
    assert cli.run("estimate", out, n=4, strategy=["q1rh2"], boundary_correction=True) == 0
    assert "eta[q1rh2]" in out.getvalue()


def _subprocess(args, threads, cwd):
    env = {"HEXPDE_THREADS": str(threads), "PATH": "/usr/bin:/bin"}
    import os
    env = {**os.environ, **env}
    subprocess.run([sys.executable, "-m", "hexpde.cli", *args], check=True, cwd=cwd, env=env,
                   capture_output=True)


def test_bitwise_identical_across_threads(tmp_path):
    args = ["estimate", "--problem", "staircase", "--n", "8", "--strategy", "q2h",
            "--boundary-correction", "on", "--csv"]
    outs = []
    for threads in (1, 3):
        path = tmp_path / f"e{threads}.csv"
        _subprocess(args + [str(path)], threads, tmp_path)
        outs.append(path.read_bytes())
    conv = []
    for threads in (1, 2):
        path = tmp_path / f"c{threads}.csv"
        _subprocess(["convergence", "--n", "4", "--levels", "2", "--estimate", "q2rh", "--solver",
                     "minres-amg", "--csv", str(path)], threads, tmp_path)
        conv.append(path.read_bytes())
    assert outs[0] == outs[1] and conv[0] == conv[1]
