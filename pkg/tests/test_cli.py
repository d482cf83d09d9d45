import json
import subprocess
import sys

import pytest

from singhopf import cli


def _run(capsys, *argv):
    code = cli.main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_regions_report(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", str(tmp_path), "regions", "--B", "0.001", "--C", "0.1")
    assert code == 0
    rep = json.loads(out)
    assert rep["family"] == "IIa"
    assert rep["gh_sign"] == 1 and rep["canard_sign"] == 1
    assert len(rep["canard_lines"]) == 2


def test_malformed_config_exits_2(capsys, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"B": 0.001,, }')
    code, _, err = _run(capsys, "--config", str(cfg), "regions")
    assert code == 2
    assert json.loads(err)["error"] == "config"


@pytest.mark.parametrize("body,key", [({"bogus": 1}, "bogus"), ({"B": "abc"}, "B"),
                                      ({"command": "sweep"}, "command")])
def test_config_errors_name_key(capsys, tmp_path, body, key):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(body))
    code, _, err = _run(capsys, "--config", str(cfg), "regions")
    assert code == 2
    assert json.loads(err)["key"] == key


def test_config_values_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"B": 0.02, "C": 0.1}))
    _, out, _ = _run(capsys, "--out", str(tmp_path), "--config", str(cfg), "regions")
    assert json.loads(out)["family"] == "VIIIa"
    _, out, _ = _run(capsys, "--out", str(tmp_path), "--config", str(cfg), "regions",
                     "--B", "0.001")
    assert json.loads(out)["family"] == "IIa"


def test_loci_csv_is_reproducible(capsys, tmp_path):
    argv = ["loci", "--B", "0.001", "--C", "0.1", "--a-grid", "-0.1:0.02:6"]
    a, b = tmp_path / "a", tmp_path / "b"
    _run(capsys, "--out", str(a), *argv)
    _run(capsys, "--out", str(b), *argv)
    csv_a = (a / "curves" / "loci.csv").read_bytes()
    assert csv_a == (b / "curves" / "loci.csv").read_bytes()
    assert csv_a.splitlines()[0] == b"A,mu_SN,mu_Hopf,l1,A_ZH,A_GH1,A_GH2"
    prov = json.loads((a / "curves" / "loci.csv.prov.json").read_text())
    assert set(prov) >= {"config_hash", "version", "tolerances"}


def test_negative_grid_values(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", str(tmp_path), "loci", "--a-grid", "-0.1:-0.05:3")
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert [float(r.split(",")[0]) for r in rows] == pytest.approx([-0.1, -0.075, -0.05])


def test_simulate_writes_trajectory(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", str(tmp_path), "simulate", "--t-max", "5")
    assert code == 0
    rep = json.loads(out)
    assert rep["termination"] and rep["n_points"] > 2
    head = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert head == "t,X,Y,Z"


def test_domain_error_exit_1(capsys, tmp_path):
    code, _, err = _run(capsys, "--out", str(tmp_path), "regions", "--B", "0")
    assert code == 1
    assert "error" in json.loads(err)


def test_sweep_reports_hopf(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "singhopf.cli", "--out", str(tmp_path), "sweep",
                           "--A", "-0.05", "--B", "0.001", "--C", "0.1", "--mu", "0:0.0025",
                           "--no-tangency"], capture_output=True, text=True, check=True)
    rec = json.loads(proc.stdout)
    hopf = rec["events"][0]
    assert hopf["kind"] == "H_sup" and abs(hopf["mu"] - 0.001246) < 5e-6
    assert (tmp_path / "sweeps" / "sweep.json.prov.json").exists()
