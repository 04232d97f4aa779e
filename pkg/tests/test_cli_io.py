import json
from pathlib import Path

import numpy as np
import pytest

from seaice_vp.assembly import Problem
from seaice_vp.cli import main
from seaice_vp.cli_io import (ScenarioError, dump_scenario, element_fields, parse_scenario,
                              parse_scenario_text, read_vtk, snapshot, write_snapshot)
from seaice_vp.forcing import IceStrengthField, NodalSeries, PhysParams
from seaice_vp.mesh import build_rect_mesh
from seaice_vp.rheology import RheologyParams
from seaice_vp.solver import read_ledger_csv

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
MINIMAL = "[mesh]\nnx = 4\nny = 4\n[rheology]\n"


def test_minimal_scenario_defaults_echoed():
    sc = parse_scenario_text(MINIMAL)
    assert sc.rheology.e_bar == 2.0 and sc.rheology.lam == 0.5
    assert "rheology.e_bar" in sc.defaults_applied
    assert "mesh.nx" not in sc.defaults_applied
    assert sc.build_mesh().n_vertices == 25


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_round_trip(path):
    sc = parse_scenario(path)
    again = parse_scenario_text(dump_scenario(sc), base_dir=sc.base_dir)
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)


@pytest.mark.parametrize("text, match", [
    (MINIMAL + "[ocean]\ntheta = 1.0\n", "pi/4"),
    (MINIMAL + "[strength]\nP = 0.0\n", "P"),
    (MINIMAL + "[strength]\nP = 1e-4\nP_floor = 1e-3\n", "P_floor"),
    (MINIMAL + "[ocean]\nspeed = 1.0\n", r"\[ocean\] speed: unknown key"),
    (MINIMAL + "[weather]\n", "weather"),
    ("[mesh]\nnx = 4\n", "rheology"),
    (MINIMAL + "[solver]\ndt = 'fast'\n", r"\[solver\] dt"),
    (MINIMAL + "[solver]\ndt = -1.0\n", "dt"),
    ("[mesh\n", "<text>"),
    (MINIMAL + "[strength]\nP_file = 'nope.csv'\n", "nope.csv"),
    ("[mesh]\nnx = 4\nny = 4\n[rheology]\nmode = 'magic'\n", "mode"),
    ("[mesh]\nnx = 4\nny = 4\n[rheology]\nmode = 'eps_only'\n", "epsilon"),
])
def test_scenario_validation_errors(text, match):
    with pytest.raises(ScenarioError, match=match):
        parse_scenario_text(text)


def test_missing_file_is_scenario_error(tmp_path):
    with pytest.raises(ScenarioError):
        parse_scenario(tmp_path / "missing.toml")


def _two_triangles():
    mesh = build_rect_mesh(1, 1)
    return Problem(mesh, RheologyParams(delta_lo=0.5, delta_hi=2.0), PhysParams(),
                   IceStrengthField(NodalSeries.constant(2.0, 4), 1.0))


def test_vtk_zero_field_two_triangles(tmp_path):
    p = _two_triangles()
    snapshot(tmp_path / "z.vtk", p, p.mesh.zero(), 0.0)
    d = read_vtk(tmp_path / "z.vtk")
    assert d.points.shape == (4, 3) and d.cells.shape == (2, 3)
    np.testing.assert_array_equal(d.cell_types, [5, 5])
    assert not np.any(d.point_data["velocity"])
    np.testing.assert_array_equal(d.point_data["P"], [2.0] * 4)
    for name in ("delta_p", "sigma_xy"):
        assert not np.any(d.cell_data[name])
    # at rest sigma = -(P/2) Id, nonzero diagonal
    np.testing.assert_array_equal(d.cell_data["sigma_xx"], [-1.0, -1.0])


def test_yield_ratio_in_and_above_band():
    mesh = build_rect_mesh(2, 2)
    params = RheologyParams(delta_lo=0.5, delta_hi=2.0)
    p = Problem(mesh, params, PhysParams(),
                IceStrengthField(NodalSeries.constant(2.0, mesh.n_vertices), 1.0))
    # single interior dof; set it to put every element in a chosen regime
    for amp, check in ((0.8, lambda r: np.allclose(r, 1.0, rtol=0, atol=1e-12)),
                       (40.0, lambda r: np.all(r > 1.0))):
        u = np.array([amp, 0.3 * amp])
        f = element_fields(p, u, 0.0)
        # elements touching the single interior vertex
        touch = np.any(mesh.triangles == np.flatnonzero(~mesh.boundary_mask)[0], axis=1)
        dp = f["delta_p"][touch]
        f["yield_lhs_over_quarterP2"] = f["yield_lhs_over_quarterP2"][touch]
        if amp == 0.8:
            assert np.all((dp >= 0.5) & (dp <= 2.0))
        else:
            assert np.all(dp > 2.0)
        assert check(f["yield_lhs_over_quarterP2"])


def test_vtk_roundtrip_values(tmp_path):
    mesh = build_rect_mesh(3, 3)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(mesh.n_dofs)
    cells = {"a": rng.standard_normal(mesh.n_triangles)}
    P = rng.uniform(1, 2, mesh.n_vertices)
    write_snapshot(tmp_path / "s.vtk", mesh, u, P, cells)
    d = read_vtk(tmp_path / "s.vtk")
    np.testing.assert_array_equal(d.point_data["velocity"][:, :2], mesh.to_nodal(u))
    np.testing.assert_array_equal(d.point_data["P"], P)
    np.testing.assert_array_equal(d.cell_data["a"], cells["a"])
    np.testing.assert_array_equal(d.cells, mesh.triangles)


def test_vtk_reader_rejects_garbage(tmp_path):
    (tmp_path / "x.vtk").write_text("hello\n")
    with pytest.raises(ValueError):
        read_vtk(tmp_path / "x.vtk")


# -- CLI ----------------------------------------------------------------------

def _json_lines(out):
    return [json.loads(ln) for ln in out.strip().splitlines()]


def test_cli_verify_discriminant(capsys):
    assert main(["verify", "--suite", "discriminant"]) == 0
    reports = _json_lines(capsys.readouterr().out)
    assert len(reports) == 1
    r = reports[0]
    assert {"name", "samples", "worst_violation", "tolerance", "pass", "witness"} <= set(r)
    assert r["pass"] is True


def test_cli_verify_small_suites(capsys):
    assert main(["verify", "--suite", "yield,pointwise,drag", "--samples", "2000",
                 "--seed", "3"]) == 0
    assert len(_json_lines(capsys.readouterr().out)) == 3


def test_cli_verify_config_errors(capsys):
    assert main(["verify", "--suite", "nonsense"]) == 2
    assert main(["verify", "--samples", "0"]) == 2
    assert main(["verify", "--mode", "eps_only"]) == 2  # epsilon must be > 0 there


def test_cli_verify_failure_exit_code(capsys, monkeypatch):
    import seaice_vp.cli as cli
    bad = cli.V._report("fake", 1, [1.0], lambda k: {}, 0.0, "")
    monkeypatch.setitem(cli.SUITES, "fake", (1, lambda n, s, p: [bad]))
    assert main(["verify", "--suite", "fake"]) == 3


def test_cli_run_missing(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_run_invalid_scenario(tmp_path, capsys):
    (tmp_path / "bad.toml").write_text(MINIMAL + "[ocean]\ntheta = 1.0\n")
    assert main(["run", str(tmp_path / "bad.toml")]) == 2
    assert "pi/4" in capsys.readouterr().err


def test_cli_run_rest_state(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SEAICE_VP_OUT_DIR", str(tmp_path))
    text = (SCENARIOS / "rest_state.toml").read_text().replace("nx = 16", "nx = 6").replace(
        "ny = 16", "ny = 6")
    (tmp_path / "rest.toml").write_text(text)
    assert main(["run", str(tmp_path / "rest.toml")]) == 0
    rep = _json_lines(capsys.readouterr().out)[0]
    assert rep["status"] == "ok" and rep["steps"] == 100
    ledger = read_ledger_csv(tmp_path / "rest_ledger.csv")
    for c in ("kinetic", "a_dissipation", "drag_power", "coriolis_power", "external_power"):
        assert not np.any(ledger[c])
    assert (tmp_path / "rest_resolved.toml").exists()
    snaps = sorted(tmp_path.glob("rest_*.vtk"))
    assert len(snaps) == 3
    assert not np.any(read_vtk(snaps[-1]).point_data["velocity"])
    resolved = parse_scenario(tmp_path / "rest_resolved.toml")
    assert resolved == parse_scenario(tmp_path / "rest.toml")


def test_cli_run_solver_failure(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SEAICE_VP_OUT_DIR", str(tmp_path))
    (tmp_path / "hard.toml").write_text(
        "[mesh]\nnx = 6\nny = 6\n[rheology]\ndelta_lo = 1e-3\ndelta_hi = 1e-2\n"
        "[strength]\nP = 1e-3\n[ocean]\nc_ocean = 1.0\ncurrent = [0.1, 0.0]\n"
        "[solver]\ndt = 0.01\nt_end = 0.05\npicard_max = 1\n")
    assert main(["run", str(tmp_path / "hard.toml")]) == 1
    assert _json_lines(capsys.readouterr().out)[0]["status"] == "solver_failure"


def test_cli_mesh_info(capsys):
    assert main(["mesh-info", str(SCENARIOS / "file_forcing.toml")]) == 0
    info = _json_lines(capsys.readouterr().out)[0]
    assert info["n_dofs"] == 2 * info["n_interior"]
    assert info["area_total"] == pytest.approx(1.0)


def test_cli_convergence_small(capsys):
    assert main(["convergence", "--levels", "8", "16"]) == 0
    rep = _json_lines(capsys.readouterr().out)[0]
    assert rep["pass"] and rep["observed_order_H"] > 1.8
    assert main(["convergence", "--levels", "16", "8"]) == 2


def test_cli_usage_error():
    assert main(["frobnicate"]) == 2
