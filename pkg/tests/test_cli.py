import csv
import json
import math
from pathlib import Path

import pytest

from qetsim.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
QET = json.loads((CONFIGS / "reference_qet.json").read_text())["qet"]


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


def test_analyze_reference(capsys, tmp_path):
    code, summary, _ = run(capsys, "analyze", "--config", str(CONFIGS / "reference_qet.json"), "--out", str(tmp_path))
    assert code == 0
    currents = [c["i_p_A"] * 1e6 for c in summary["result"]["currents"]]
    assert currents == pytest.approx([13.03599, 1.303599, 14.33959, 26.07198, 2.607198], rel=5e-7)
    assert (tmp_path / "summary.json").exists()
    meta = json.loads((tmp_path / "summary.meta.json").read_text())
    assert meta["wall_clock_s"] >= 0
    assert "wall_clock_s" not in (tmp_path / "summary.json").read_text()


def test_analyze_zero_and_negative_counts(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": QET, "analyze": {"counts": [[0, 0], [-1, 0]]}})
    code, summary, _ = run(capsys, "analyze", "--config", cfg)
    assert code == 0
    currents = [c["i_p_A"] for c in summary["result"]["currents"]]
    assert currents[0] == 0.0
    assert currents[1] * 1e6 == pytest.approx(-13.03599, rel=1e-6)


def test_summary_deterministic(capsys, tmp_path):
    for sub in ("a", "b"):
        assert main(["analyze", "--config", str(CONFIGS / "reference_qet.json"), "--out", str(tmp_path / sub)]) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_echo_rerun_reproduces(capsys, tmp_path):
    code, first, _ = run(capsys, "analyze", "--config", str(CONFIGS / "reference_qet.json"))
    cfg = write(tmp_path, first["resolved_config"])
    code, second, _ = run(capsys, "analyze", "--config", cfg)
    assert code == 0
    assert second["result"] == first["result"]
    assert second["config_digest"] == first["config_digest"]


def test_gate_requires_transmon(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": QET})
    code, _, err = run(capsys, "gate", "--config", cfg)
    assert code == 2
    assert "missing transmon block" in err


def test_config_error_exit_code(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": {**QET, "M12": "12nH"}})
    code, _, err = run(capsys, "analyze", "--config", cfg)
    assert code == 2
    assert "K_12" in err


def test_missing_file_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "analyze", "--config", str(tmp_path / "nope.json"))
    assert code == 4


def test_regime_failure_exit_code(capsys, tmp_path):
    data = json.loads((CONFIGS / "z_gate.json").read_text())
    data["transmon"] = {"e_j": "1MHz", "e_c": "148.628MHz", "m": "0.02nH"}
    code, _, err = run(capsys, "gate", "--config", write(tmp_path, data))
    assert code == 3
    assert "E_JS/E_C" in err


def test_transient_empty_sources(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": QET, "transient": {"t_end": "0.1ns"}})
    code, summary, _ = run(capsys, "transient", "--config", cfg, "--out", str(tmp_path))
    assert code == 0
    assert summary["result"]["plateaus"] == []
    assert summary["result"]["max_abs_i_p_A"] == 0.0
    rows = list(csv.reader((tmp_path / "waveform.csv").open()))
    assert rows[0][0] == "time_s" and len(rows) == 102


def test_transient_rel_tol_convergence(capsys, tmp_path):
    data = {"qet": QET, "sources": [{"port": "A", "t0": "0.2ns"}, {"port": "C", "t0": "0.8ns"}],
            "transient": {"t_end": "1.4ns"}}
    cfg = write(tmp_path, data)
    _, a, _ = run(capsys, "transient", "--config", cfg)
    _, b, _ = run(capsys, "transient", "--config", cfg, "--rel-tol", "5e-9")
    for pa, pb in zip(a["result"]["plateaus"][1:], b["result"]["plateaus"][1:]):
        assert pb["i_p_A"] == pytest.approx(pa["i_p_A"], rel=1e-3)
    assert b["resolved_config"]["transient"]["rel_tol"] == 5e-9


def test_env_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("QETSIM_OUT", str(tmp_path / "env"))
    assert main(["analyze", "--config", str(CONFIGS / "reference_qet.json")]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "summary.json").exists()


def test_gate_z_reference(capsys):
    code, summary, _ = run(capsys, "gate", "--config", str(CONFIGS / "z_gate.json"))
    res = summary["result"]
    assert code == 0
    assert res["t_z_s"] == pytest.approx(2.261e-9, abs=2e-12)
    assert res["fidelity"] >= 0.9999


def test_gate_z_identity(capsys, tmp_path):
    data = json.loads((CONFIGS / "z_gate.json").read_text())
    data["gate"]["phi_target"] = "0rad"
    code, summary, _ = run(capsys, "gate", "--config", write(tmp_path, data))
    assert summary["result"]["t_z_s"] == 0.0
    assert summary["result"]["fidelity"] == pytest.approx(1.0)


def test_sweep_mf(capsys, tmp_path):
    code, summary, _ = run(capsys, "sweep", "--config", str(CONFIGS / "sweep_mf.json"), "--out", str(tmp_path),
                           "--jobs", "2")
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 10
    assert [int(r["index"]) for r in rows] == list(range(10))
    r_cf = [float(r["r_cf"]) for r in rows]
    assert all(a > b for a, b in zip(r_cf, r_cf[1:]))


def test_sweep_parallel_matches_serial(capsys, tmp_path):
    main(["sweep", "--config", str(CONFIGS / "sweep_mf.json"), "--out", str(tmp_path / "s")])
    main(["sweep", "--config", str(CONFIGS / "sweep_mf.json"), "--out", str(tmp_path / "p"), "--jobs", "3"])
    capsys.readouterr()
    assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()


def test_sweep_m_scales_phi_ec(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": QET, "sweep": {"parameter": "qet.M", "values": ["0.01nH", "0.02nH", "0.04nH"]}})
    code, summary, _ = run(capsys, "sweep", "--config", cfg)
    phi = [r["phi_ec_Wb"] for r in summary["result"]["rows"]]
    assert phi[1] / phi[0] == pytest.approx(2.0, rel=1e-12)
    assert phi[2] / phi[0] == pytest.approx(4.0, rel=1e-12)


def test_single_point_sweep_equals_analyze(capsys, tmp_path):
    cfg = write(tmp_path, {"qet": QET, "sweep": {"parameter": "qet.Mf", "values": ["0.8nH"]}})
    _, sweep, _ = run(capsys, "sweep", "--config", cfg)
    _, analyze, _ = run(capsys, "analyze", "--config", str(CONFIGS / "reference_qet.json"))
    row = sweep["result"]["rows"][0]
    for key, value in analyze["result"]["flux_units"].items():
        assert row[key] == value


def test_bad_jobs(capsys):
    code, _, _ = run(capsys, "analyze", "--config", str(CONFIGS / "reference_qet.json"), "--jobs", "0")
    assert code == 2
