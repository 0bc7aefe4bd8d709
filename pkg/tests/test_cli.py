import csv
import json
import math

import pytest

from qubitfb import cli
from qubitfb.optimize import c1_law

FAST = ["--dt", "1e-3", "--t_burn", "0.5", "--t_avg", "1", "--n_traj", "6", "--seed", "2"]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_file_comments_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# sweep settings\nomega = 10, 20   # two points\ndt = 5e-4\nscheme = kraus\n\n")
    raw = cli.read_config_file(conf)
    assert raw == {"omega": "10, 20", "dt": "5e-4", "scheme": "kraus"}
    cfg = cli.build_config({**raw, "dt": "1e-3", "mode": "ensemble"})
    assert cfg.dt == 1e-3 and cli.omegas(cfg) == [10.0, 20.0]


def test_config_hash_ignores_output_and_workers():
    a = cli.build_config({"mode": "ensemble", "omega": "10", "output": "x", "workers": "2"})
    b = cli.build_config({"mode": "ensemble", "omega": "10", "output": "y"})
    c = cli.build_config({"mode": "ensemble", "omega": "10", "seed": "1"})
    assert a.config_hash() == b.config_hash() != c.config_hash()


@pytest.mark.parametrize("argv,field", [
    (["sweep"], "omega"),
    (["ensemble", "--omega", "10", "--dt", "0.05"], "dt"),
    (["ensemble", "--omega", "10", "--dt", "fast"], "dt"),
    (["ensemble", "--omega", "ten"], "omega"),
    (["ensemble", "--omega", "10", "--gamma", "0.15"], "table_gamma"),
    (["fit"], "input"),
])
def test_config_errors_exit_2_and_name_field(tmp_path, capsys, argv, field):
    assert cli.main(argv + ["--output", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_ensemble_writes_results_and_replays_exactly(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["ensemble", "--omega", "10,20", "--output", str(out1)] + FAST) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["artifacts"] == ["results.csv"] and manifest["seed"] == 2
    assert manifest["config"]["t_burn"] == 0.5
    rows = _rows(out1 / "results.csv")
    assert [float(r["omega_over_k"]) for r in rows] == [10.0, 20.0]
    assert all(r["config_hash"] == manifest["config_hash"] for r in rows)
    assert cli.main(["ensemble", "--from-manifest", str(out1 / "manifest.json"), "--output", str(out2)]) == 0
    assert (out1 / "results.csv").read_text() == (out2 / "results.csv").read_text()


def test_simulate_starts_from_equatorial_half_state(tmp_path):
    assert cli.main(["simulate", "--omega", "20", "--n_traj", "1", "--stride", "50", "--output", str(tmp_path),
                     "--dt", "1e-3", "--t_burn", "0", "--t_avg", "0.5"]) == 0
    rows = _rows(tmp_path / "trajectory_omega20_0.csv")
    assert float(rows[0]["a"]) == pytest.approx(0.5)
    assert float(rows[0]["theta"]) == pytest.approx(math.pi / 2)
    assert len(rows) == 11
    assert len(_rows(tmp_path / "summary.csv")) == 1


def test_fit_mode(tmp_path):
    pts = tmp_path / "points.csv"
    with open(pts, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_over_k", "c1"])
        for om in range(0, 31, 3):
            w.writerow([om, c1_law(om, 0.5, 0.186, 0.476)])
    assert cli.main(["fit", "--input", str(pts), "--output", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "fit.csv")
    assert float(row["A"]) == pytest.approx(0.5, abs=1e-6)
    assert float(row["r"]) == pytest.approx(0.476, abs=1e-6)


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise cli.IntegrationError("non-finite state", seed=2, step=7)

    monkeypatch.setattr(cli, "estimate_steady_error", boom)
    assert cli.main(["ensemble", "--omega", "10", "--output", str(tmp_path)] + FAST) == 3
    assert "non-finite" in capsys.readouterr().err


def test_check_mode_reports_each_oracle(tmp_path, capsys):
    assert cli.main(["check", "--output", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for name in ("shared_noise_theta", "shared_noise_a", "thermal_oracle_path", "thermal_fixed_point",
                 "theta2_fixed_point"):
        assert f"PASS {name}" in out
    assert all(r["passed"] == "1" for r in _rows(tmp_path / "check.csv"))
