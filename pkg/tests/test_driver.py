import json

import numpy as np
import pytest

from pmev.cli import main
from pmev.driver import ConvergenceTable, RunReport, SimulationConfig, convergence_study, fit_slope, run_simulation, time_grid
from pmev.exact import BpParams


def test_config_defaults_and_times():
    cfg = SimulationConfig()
    t0 = BpParams().t0
    assert cfg.t_start_value() == pytest.approx(t0)
    assert cfg.t_end_value() == pytest.approx((t0 + 0.1) / 2)
    assert SimulationConfig(example="waiting").t_start_value() == 0.0


def test_config_json_round_trip(tmp_path):
    cfg = SimulationConfig(m=5.0, n_target=800, dt_max=2e-4)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SimulationConfig.from_json(path) == cfg


@pytest.mark.parametrize(
    "bad",
    [
        {"example": "square"},
        {"n_target": 4},
        {"dt_max": 0.0},
        {"t_start": 0.5, "t_end": 0.1},
        {"colour": 1},
        {"gradient_recovery": "spr"},
    ],
)
def test_config_validation(bad):
    with pytest.raises((ValueError, TypeError)):
        SimulationConfig.from_dict(bad)


def test_time_grid():
    g = time_grid(0.0, 0.35, 0.1)
    np.testing.assert_allclose(g, [0.0, 0.1, 0.2, 0.3, 0.35])
    g = time_grid(0.0, 0.3, 0.1)
    np.testing.assert_allclose(g, [0.0, 0.1, 0.2, 0.3])
    assert len(time_grid(1.0, 1.0, 0.1)) == 1
    assert np.all(np.diff(time_grid(0.04, 0.07, 1e-4)) <= 1e-4 * (1 + 1e-9))


def test_fit_slope():
    h = np.array([0.1, 0.05, 0.025])
    assert fit_slope(h, 3 * h**2) == pytest.approx(2.0)
    assert fit_slope([1.0], [1.0]) is None


def test_short_bp_run_writes_outputs(tmp_path):
    cfg = SimulationConfig(n_target=100, t_end=BpParams().t0 + 1e-3, output_dir=str(tmp_path), snapshot_every=5)
    rep = run_simulation(cfg)
    assert rep.ok and rep.exit_code == 0
    assert rep.n_slabs == 10
    assert rep.max_slab <= cfg.dt_max * (1 + 1e-9)
    assert rep.final_errors["L2_v"] < 1e-2
    assert rep.worst_negative_ratio >= -1e-6
    for name in ("report.json", "errors.csv", "boundary.csv", "mesh_0.vtk", "mesh_10.vtk"):
        assert (tmp_path / name).exists()
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["status"] == "ok" and data["n_slabs"] == 10
    assert [s["step"] for s in rep.snapshots] == [0, 5, 10]
    # boundary moves outward with the exact speed of about 2
    assert rep.displacement[-1][1] == pytest.approx(2e-3, rel=0.3)


def test_failure_is_reported_not_raised():
    # one huge Euler step folds the concave boundary of the donut onto itself
    cfg = SimulationConfig(example="complex", n_target=200, dt_max=0.5, t_end=1.0)
    rep = run_simulation(cfg)
    assert rep.status == "boundary_collision" and rep.exit_code == 3
    assert "self-intersects" in rep.message
    assert rep.final_mesh is not None and rep.n_slabs == 0


def test_report_exit_codes():
    assert RunReport(config={}, status="mesh_tangled").exit_code == 2
    assert RunReport(config={}, status="boundary_collision").exit_code == 3
    assert RunReport(config={}, status="integrator_failure").exit_code == 4


def test_convergence_study_with_stub_runner():
    def fake(cfg):
        rep = RunReport(config=cfg.to_dict(), n_elements=cfg.n_target)
        h = cfg.n_target**-0.5
        rep.snapshots = [{"t": 0.0, "errors": {k: h**2 for k in ("L1_v", "L2_v", "L1_u", "L2_u", "Linf_b")}}]
        return rep

    table = convergence_study(SimulationConfig(), [100, 400, 1600], run=fake)
    assert isinstance(table, ConvergenceTable)
    assert table.slopes["L2_v"] == pytest.approx(2.0)
    assert "slope" in table.format()
    with pytest.raises(ValueError):
        convergence_study(SimulationConfig(example="waiting"), [100], run=fake)


def test_cli_bp_table(capsys):
    assert main(["bp-table", "--m", "2", "--points", "3"]) == 0
    out = capsys.readouterr().out
    assert "speed=2" in out and "0,0.5,1" in out


def test_cli_run(tmp_path, capsys):
    code = main(["run", "--n-target", "60", "--t-end", str(BpParams().t0 + 3e-4), "--output-dir", str(tmp_path)])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"


def test_cli_bad_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"example": "nope"}))
    assert main(["run", "--config", str(path)]) == 1


def test_zero_length_run():
    t0 = BpParams().t0
    rep = run_simulation(SimulationConfig(n_target=60, t_start=t0, t_end=t0))
    assert rep.ok and rep.n_slabs == 0
    assert len(rep.snapshots) == 1 and rep.snapshots[0]["t"] == t0
    assert rep.final_errors["L2_v"] < 0.05  # interpolation error of a 54-element mesh


def test_runs_are_deterministic():
    cfg = SimulationConfig(n_target=60, t_end=BpParams().t0 + 5e-4)
    a, b = run_simulation(cfg), run_simulation(cfg)
    np.testing.assert_array_equal(a.final_v, b.final_v)
    np.testing.assert_array_equal(a.final_mesh.vertices, b.final_mesh.vertices)
    assert a.snapshots == b.snapshots
