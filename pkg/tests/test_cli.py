import json
import math

import pytest

from darkloop import cli


def test_parse_flags_maps_directly():
    cfg = cli.parse_config(["cphase", "--r0", "0.5", "--t3", "1100", "--dt", "0.01"])
    assert cfg.experiment == "cphase"
    assert cfg.r0 == [0.5] and cfg.t3 == [1100.0] and cfg.dt == 0.01


def test_missing_r0_names_field():
    with pytest.raises(cli.UsageError, match="r0"):
        cli.parse_config(["cphase", "--t3", "1100"])


def test_flag_overrides_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "cphase", "r0": 0.5, "t3": 1100}))
    assert cli.parse_config(["--config", str(path)]).r0 == [0.5]
    assert cli.parse_config(["cphase", "--config", str(path), "--r0", "0.3"]).r0 == [0.3]


@pytest.mark.parametrize("payload,field", [
    ({"experiment": "cphase", "r0": 0.5, "t3": 1100, "colour": 1}, "colour"),
    ({"experiment": "warp"}, "experiment"),
    ({"experiment": "ramp", "r0": 0.5, "t": -1}, "t"),
    ({"experiment": "ramp", "r0": 0.5, "t": ""}, "t"),
    ({"experiment": "ramp", "r0": 0.5, "t": 10, "dt": 0}, "dt"),
])
def test_config_errors_name_field(tmp_path, payload, field):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(cli.UsageError, match=field):
        cli.parse_config(["--config", str(path)])


def test_malformed_and_missing_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(cli.UsageError, match="malformed"):
        cli.parse_config(["--config", str(bad)])
    with pytest.raises(cli.UsageError, match="not found"):
        cli.parse_config(["--config", str(tmp_path / "none.json")])


def test_parse_values_forms():
    assert cli.parse_values("0.2,0.5") == [0.2, 0.5]
    assert cli.parse_values("0:1:3") == [0.0, 0.5, 1.0]
    assert cli.parse_values(2) == [2.0]


def test_usage_errors_exit_1(capsys):
    assert cli.main(["cphase", "--t3", "100"]) == 1
    assert "r0" in capsys.readouterr().err
    assert cli.main(["nonsense"]) == 1
    assert cli.main(["ramp", "--r0", "0.5", "--t", "1", "--bogus", "2"]) == 1


def test_dfs_check(tmp_path, capsys):
    assert cli.main(["dfs-check", "--r0", "0.5", "--phi", "0.3", "--out", str(tmp_path)]) == 0
    summary = (tmp_path / "summary.txt").read_text()
    value = float(next(l for l in summary.splitlines() if l.startswith("max_norm_R_psi")).split(": ")[1])
    assert value <= 1e-10
    assert "kernel_dim_full: 6" in summary and "kernel_dim_e_span: 4" in summary


def test_feasibility_summary(tmp_path):
    assert cli.main(["feasibility", "--out", str(tmp_path)]) == 0
    summary = dict(l.split(": ", 1) for l in (tmp_path / "summary.txt").read_text().splitlines())
    assert float(summary["Gamma_over_gamma_eff"]) == pytest.approx(4e4, rel=0.1)
    assert float(summary["gate_time_ms"]) == pytest.approx(2.8, rel=0.1)
    assert summary["dt_halving_delta"].startswith("n/a")


def test_holonomy_summary(tmp_path):
    assert cli.main(["holonomy", "--r0", "0.5", "--phi0", "1.0", "--steps", "200", "--out", str(tmp_path)]) == 0
    summary = dict(l.split(": ", 1) for l in (tmp_path / "summary.txt").read_text().splitlines())
    assert float(summary["chi1"]) == pytest.approx(float(summary["chi1_expected"]), abs=1e-9)


def test_single_run_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["ramp", "--r0", "0.4", "--t", "5"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    summary = (a / "summary.txt").read_text()
    assert "dt_halving_delta:" in summary and "monitor_max_trace_dev" in summary


def test_sweep_writes_ordered_rows(tmp_path):
    assert cli.main(["loop", "--r0", "0.2,0.5", "--t", "4", "--jobs", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3
    assert rows[1].startswith("0.2,4.0") and rows[2].startswith("0.5,4.0")
    assert "max_dt_halving_delta" in (tmp_path / "summary.txt").read_text()


def test_no_csv(tmp_path):
    assert cli.main(["ramp", "--r0", "0.4", "--t", "2", "--no-csv", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "trajectory.csv").exists()


def test_monitor_failure_exits_2(tmp_path):
    assert cli.main(["loop", "--r0", "1.5", "--t", "10", "--dt", "1.0", "--out", str(tmp_path)]) == 2
    assert "FAILED" in (tmp_path / "summary.txt").read_text()


def test_short_cphase_reports_phases(tmp_path):
    assert cli.main(["cphase", "--r0", "0.5", "--t3", "60", "--phi0", "1.0", "--out", str(tmp_path)]) == 0
    summary = dict(l.split(": ", 1) for l in (tmp_path / "summary.txt").read_text().splitlines())
    for key in ("chi1", "chi12", "Delta", "fidelity", "dt_halving_delta", "converged"):
        assert key in summary
    assert math.isfinite(float(summary["Delta_expected"]))
