import json
import os

import numpy as np
import pytest

from cloakopt import cli, mesh as M, vtkio
from cloakopt.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_mesh_command(tmp_path, capsys):
    code, out = run(
        capsys, "mesh", "--example", "1", "--mesh-h", "0.4", "--out", str(tmp_path)
    )
    assert code == EXIT_OK
    info = json.loads(out)
    assert info["validation"] == "OK"
    loaded = M.load_mesh(tmp_path / "mesh.txt")
    assert loaded.n_triangles == info["triangles"]


def test_axisym_command_minimizer(tmp_path, capsys):
    code, out = run(
        capsys, "axisym", "--kind", "uniform-p", "--grid", "201", "--out", str(tmp_path)
    )
    assert code == EXIT_OK
    path = tmp_path / "landscape_uniform-p.csv"
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    best = rows[np.argmin(rows[:, 2]), 0]
    spacing = rows[1, 0] - rows[0, 0]
    assert abs(best - 16.0 / 9.0) <= spacing
    assert open(path).readline().strip() == "param1,param2,g"


def test_nocloak_command(capsys):
    code, out = run(capsys, "nocloak", "--example", "1", "--load", "XT",
                    "--mesh-h", "0.45")
    assert code == EXIT_OK
    data = json.loads(out)
    assert 0.0 < data["g_hat"] < 2.0


@pytest.fixture(scope="module")
def optimize_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "case.cfg"
    cfg.write_text(
        "geometry.target_h = 0.45\n"
        "solver.k_target = 1e4\n"
        "solver.k0 = 10\n"
        "solver.newton_tol = 1e-11\n"
    )
    code = cli.main([
        "optimize", "--example", "1", "--load", "XT",
        "--config", str(cfg), "--out", str(out), "--quiet",
    ])
    assert code == EXIT_OK
    return out


def test_optimize_outputs_complete(optimize_run):
    names = set(os.listdir(optimize_run))
    assert {"mesh.txt", "config.txt", "trace.csv", "design.txt",
            "fields.vtk", "manifest.json"} <= names
    manifest = json.loads((optimize_run / "manifest.json").read_text())
    assert set(manifest["files"]) >= {"trace.csv", "design.txt", "fields.vtk"}


def test_trace_csv_layout(optimize_run):
    lines = (optimize_run / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("step,k,newton_iters,res_inf,g_hat_0")
    assert len(lines) >= 3


def test_optimize_then_evaluate_matches_trace(optimize_run, capsys):
    lines = (optimize_run / "trace.csv").read_text().splitlines()
    g_final = float(lines[-1].split(",")[4])  # single-load g_hat_0 column
    code = cli.main([
        "evaluate", "--example", "1", "--load", "XT",
        "--mesh", str(optimize_run / "mesh.txt"),
        "--design", str(optimize_run / "design.txt"),
    ])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    g_eval = json.loads(out)["g_hat"]["XT"]
    assert abs(g_eval - g_final) <= 1e-12


def test_optimize_determinism(tmp_path, capsys):
    args = ["optimize", "--example", "1", "--load", "XT", "--quiet"]
    cfg = tmp_path / "fast.cfg"
    cfg.write_text("geometry.target_h = 0.5\nsolver.k_target = 100\n")
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = cli.main(args + ["--config", str(cfg), "--out", str(out)])
        capsys.readouterr()
        assert code == EXIT_OK
        outs.append((out / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


def test_vtk_export_fields(optimize_run):
    n_pts, n_cells = vtkio.read_vtk_counts(optimize_run / "fields.vtk")
    mesh = M.load_mesh(optimize_run / "mesh.txt")
    assert (n_pts, n_cells) == (mesh.n_nodes, mesh.n_triangles)
    text = (optimize_run / "fields.vtk").read_text()
    for name in ("VECTORS u_XT", "VECTORS gamma_XT", "SCALARS xi", "SCALARS mu",
                 "SCALARS nu", "SCALARS region", "SCALARS auxetic",
                 "SCALARS stress_frobenius_XT"):
        assert name in text


def test_vtk_zero_design_constant_mu(tmp_path, rect_mesh):
    from cloakopt.solver import RunResult, SolverConfig

    n = rect_mesh.n_nodes
    result = RunResult(
        xi=np.zeros(0), eta=np.zeros(0), cloak_nodes=np.zeros(0, dtype=int),
        u=[np.zeros(2 * n)], gamma=[np.zeros(2 * n)], utilde=[np.zeros(2 * n)],
        trace=[], converged=True, failure_k=None, config=SolverConfig(),
    )
    path = tmp_path / "f.vtk"
    vtkio.export_fields(path, rect_mesh, result, load_ids=["XT"])
    text = path.read_text().splitlines()
    start = text.index("SCALARS mu double 1") + 2
    mu_vals = {float(v) for v in text[start : start + n]}
    assert mu_vals == {1.0}


def test_auxetic_cells_flagged(tmp_path, coarse_hole_mesh):
    from cloakopt.assembly import Operators
    from cloakopt.material import BaseMaterial
    from cloakopt.solver import RunResult, SolverConfig

    ops = Operators(coarse_hole_mesh, BaseMaterial())
    n = coarse_hole_mesh.n_nodes
    result = RunResult(
        xi=np.zeros(ops.n_xi), eta=np.full(ops.n_xi, 2.0),
        cloak_nodes=ops.cloak_nodes,
        u=[np.zeros(2 * n)], gamma=[np.zeros(2 * n)], utilde=[np.zeros(2 * n)],
        trace=[], converged=True, failure_k=None, config=SolverConfig(),
    )
    path = tmp_path / "aux.vtk"
    vtkio.export_fields(path, coarse_hole_mesh, result, load_ids=["XT"])
    lines = path.read_text().splitlines()
    start = lines.index("SCALARS auxetic double 1") + 2
    flags = np.array([float(v) for v in lines[start : start + coarse_hole_mesh.n_triangles]])
    cloak = coarse_hole_mesh.region == M.Region.CLOAK
    assert np.all(flags[cloak] == 1.0)
    assert np.all(flags[~cloak] == 0.0)


def test_table_command_nc(tmp_path, capsys):
    code, out = run(
        capsys, "table", "--example", "1", "--designs", "NC",
        "--mesh-h", "0.4", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "design,XT,YT,ST,XD,YD,SD,average"
    assert lines[1].startswith("NC,")
    assert (tmp_path / "table.csv").exists()


def test_report_command(optimize_run, capsys):
    code, out = run(capsys, "report", "--run", str(optimize_run))
    assert code == EXIT_OK
    man = json.loads(out)
    assert "config_hash" in man
    assert "trace.csv" in man["files"]


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("not a config line\n")
    code, out = run(capsys, "nocloak", "--example", "1", "--config", str(bad))
    assert code == EXIT_CONFIG
    assert json.loads(out)["code"] == EXIT_CONFIG


def test_exit_code_unknown_override(tmp_path, capsys):
    bad = tmp_path / "bad2.cfg"
    bad.write_text("bogus.key = 3\n")
    code, out = run(capsys, "nocloak", "--example", "1", "--config", str(bad))
    assert code == EXIT_CONFIG


def test_exit_code_overwrite_guard(tmp_path, capsys):
    code, _ = run(capsys, "mesh", "--example", "1", "--mesh-h", "0.5",
                  "--out", str(tmp_path))
    assert code == EXIT_OK
    code, out = run(capsys, "mesh", "--example", "1", "--mesh-h", "0.5",
                    "--out", str(tmp_path))
    assert code == EXIT_IO
    code, _ = run(capsys, "mesh", "--example", "1", "--mesh-h", "0.5",
                  "--out", str(tmp_path), "--force")
    assert code == EXIT_OK


def test_exit_code_solver_failure(tmp_path, capsys):
    cfg = tmp_path / "hard.cfg"
    cfg.write_text(
        "geometry.target_h = 0.5\n"
        "solver.k_target = 1e7\n"
        "solver.k0 = 1e7\n"
        "solver.max_newton_iters = 1\n"
        "solver.max_bisections = 1\n"
    )
    code, out = run(
        capsys, "optimize", "--example", "1", "--load", "XT",
        "--config", str(cfg), "--out", str(tmp_path / "run"), "--quiet",
    )
    assert code == EXIT_SOLVER
    assert json.loads(out)["code"] == EXIT_SOLVER


def test_config_value_parsing(tmp_path):
    cfg = tmp_path / "types.cfg"
    cfg.write_text(
        "a.flag = true\n"
        "a.pair = 0.5, 1.5\n"
        "a.int = 7\n"
        "a.float = 2.5e-3\n"
        "a.text = hello  # trailing comment\n"
    )
    vals = cli.parse_config(cfg)
    assert vals == {
        "a.flag": True,
        "a.pair": (0.5, 1.5),
        "a.int": 7,
        "a.float": 2.5e-3,
        "a.text": "hello",
    }
