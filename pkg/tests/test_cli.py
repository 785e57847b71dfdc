import csv
import hashlib
import json
import subprocess
import sys

import pytest

from conftest import make_scenario
from mbqot.cli import main
from mbqot.optimizer import default_pumps
from mbqot.scenario import PumpSpec, dump_scenario, load_scenario_file, scenario_hash


@pytest.fixture
def scen(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(dump_scenario(make_scenario(per_band=4, bands=(("C", 192.0, 192.6),), n_spans=2)))
    return p


def _manifest_ok(out):
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["name"] for f in man["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    for f in man["files"]:
        data = (out / f["name"]).read_bytes()
        assert len(data) == f["bytes"]
        assert hashlib.sha256(data).hexdigest() == f["sha256"]
    return man


def test_simulate_writes_outputs_and_manifest(scen, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", str(scen), "--out", str(out)]) == 0
    man = _manifest_ok(out)
    assert man["command"] == "simulate"
    assert man["scenario_hash"] == scenario_hash(load_scenario_file(scen))
    assert {"metrics.csv", "nli.csv", "summary.json", "scenario.toml", "profile_span00.csv"} <= {
        f["name"] for f in man["files"]}


def test_isrs_override(scen, tmp_path):
    assert main(["simulate", str(scen), "--out", str(tmp_path / "off"), "--isrs", "off", "--no-profiles"]) == 0
    saved = load_scenario_file(tmp_path / "off" / "scenario.toml")
    assert not saved.isrs_enabled
    assert not (tmp_path / "off" / "profile_span00.csv").exists()


def test_output_dir_from_environment(scen, tmp_path, monkeypatch):
    monkeypatch.setenv("MBQOT_OUT", str(tmp_path / "env"))
    assert main(["simulate", str(scen)]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_missing_scenario_is_config_error_without_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", str(tmp_path / "nope.toml"), "--out", str(out)]) == 1
    assert not out.exists()


def test_invalid_scenario_is_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[plan\n")
    assert main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["simulate"],
    ["optimize", "{scen}", "--objective", "eq3"],
    ["optimize", "{scen}", "--budget", "0"],
    ["optimize", "{scen}", "--pumps", "many"],
    ["oracle-check", "{scen}", "--channels", ""],
    ["oracle-check", "{scen}", "--channels", "0,99"],
    ["sweep", "{scen}", "--step", "0"],
])
def test_usage_errors(argv, scen, tmp_path):
    argv = [a.format(scen=scen) for a in argv] + ["--out", str(tmp_path / "o")] if len(argv) > 1 else argv
    with pytest.raises(SystemExit) as ex:
        raise SystemExit(main(argv))
    assert ex.value.code == 64
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_solver_error_exit_code(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(dump_scenario(make_scenario(length=1.0, pumps=(PumpSpec(206.0, 27.0),))))
    assert main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_infeasible_optimize(tmp_path):
    pumps = tuple(PumpSpec(212.0 + k, 24.0, max_power_dbm=27.0) for k in range(3))
    p = tmp_path / "s.toml"
    p.write_text(dump_scenario(make_scenario(per_band=3, bands=(("S", 199.0, 199.5),), pumps=pumps)))
    out = tmp_path / "o"
    assert main(["optimize", str(p), "--out", str(out), "--budget", "5"]) == 3
    assert not out.exists()


def test_optimize_is_byte_reproducible(scen, tmp_path):
    reports = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["optimize", str(scen), "--out", str(out), "--budget", "15", "--seed", "7"]) == 0
        _manifest_ok(out)
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]
    rep = json.loads(reports[0])
    assert rep["evaluations"] <= 15 and rep["seed"] == 7
    opt = load_scenario_file(tmp_path / "r0" / "optimized_scenario.toml")
    assert list(opt.launch_dbm) == rep["decision_vector"]["launch_params"]


def test_optimize_with_pumps_flag(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(dump_scenario(make_scenario(per_band=3, bands=(("S", 199.0, 199.5),))))
    out = tmp_path / "o"
    assert main(["optimize", str(p), "--out", str(out), "--budget", "6", "--pumps", "2",
                 "--launch-mode", "per_band_tilt", "--objective", "eq2"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["decision_vector"]["pump_powers_dbm"]) == 2
    assert rep["objective"] == "mean_ir_minus_spread"
    assert [q.freq_thz for q in default_pumps(2)] == [214.0, 217.0]


def test_oracle_check_pass_and_tolerance_breach(scen, tmp_path):
    out = tmp_path / "ok"
    assert main(["oracle-check", str(scen), "--out", str(out), "--channels", "0,2-3"]) == 0
    with open(out / "oracle_check.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["channel"]) for r in rows] == [0, 2, 3]
    assert all(abs(float(r["delta_dB"])) < 0.5 for r in rows)
    _manifest_ok(out)
    assert main(["oracle-check", str(scen), "--out", str(tmp_path / "tight"), "--channels", "1",
                 "--tol", "0"]) == 4


def test_sweep(scen, tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", str(scen), "--out", str(out), "--start", "-2", "--stop", "2", "--step", "2"]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["launch_dBm"] for r in rows] == ["-2", "0", "2"]


def test_console_entry_point(scen, tmp_path):
    r = subprocess.run([sys.executable, "-m", "mbqot.cli", "simulate", str(scen), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "throughput" in r.stdout
