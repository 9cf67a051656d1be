import json

import pytest

from bubbletower.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, run
from bubbletower.persist import fmt, read_csv, sha256_file


def _manifest(out, cmd):
    return json.loads((out / f"{cmd}.manifest.json").read_text())


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run(["nosuchcommand"]) == EXIT_VALIDATION
    assert run(["scan", "--grid", "4by4"]) == EXIT_VALIDATION
    assert run(["constants", "--set", "N=4", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert run(["constants", "--set", "bogus=1", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert run(["checks", "--which", "laa9", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert run(["replay", str(tmp_path / "missing.json")]) == EXIT_VALIDATION
    assert "error" in capsys.readouterr().err


def test_version_and_help():
    assert run(["--version"]) == 0
    assert run(["scan", "--help"]) == 0


def test_constants_and_manifest(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert run(["constants", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "constants.json").read_text())
    assert doc["lambda0"] == pytest.approx(0.98722, rel=1e-4)
    man = _manifest(tmp_path, "constants")
    assert man["timestamp"] == "1970-01-01T00:00:00Z"
    assert man["params"]["k"] == 8 and man["command"] == "constants"
    (entry,) = man["outputs"]
    assert entry["path"] == "constants.json"
    assert entry["sha256"] == sha256_file(tmp_path / "constants.json")


def test_config_file_and_set_precedence(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("k = 4\ntheta_bar = 0.05\n")
    out = tmp_path / "o"
    assert run(["lattice", "--config", str(cfg), "--set", "k=6", "--k", "64,128",
                "--k-base", "512", "--out", str(out)]) == EXIT_OK
    params = _manifest(out, "lattice")["params"]
    assert params["k"] == 6 and params["theta_bar"] == 0.05


def test_scan_replay_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["scan", "--grid", "5x4", "--plot", "--out", str(a)]) == EXIT_OK
    header, rows = read_csv(a / "scan.csv")
    assert header == ["r", "lam", "F_expansion"] and len(rows) == 20
    assert (a / "scan.gp").exists()
    assert b"\r\n" not in (a / "scan.csv").read_bytes()
    assert run(["replay", str(a / "scan.manifest.json"), "--out", str(b)]) == EXIT_OK
    for name in ("scan.csv", "scan.gp"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ha = {o["path"]: o["sha256"] for o in _manifest(a, "scan")["outputs"]}
    hb = {o["path"]: o["sha256"] for o in _manifest(b, "scan")["outputs"]}
    assert ha == hb


def test_critpoint(tmp_path):
    assert run(["critpoint", "--starts", "5", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "critpoint.json").read_text())
    assert doc["result"]["grad_norm"] < 1e-10
    assert doc["invariance"]["exits"] == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header == ["r", "lam", "Fbar", "grad_norm"] and rows


def test_small_solve_and_numerical_failure(tmp_path):
    ok, bad = tmp_path / "ok", tmp_path / "bad"
    assert run(["solve", "--set", "k=3", "--h", "0.4", "--out", str(ok)]) == EXIT_OK
    meta = json.loads((ok / "solution.bin.json").read_text())
    assert meta["solution"]["converged"] and meta["solution"]["positive"]
    assert abs(meta["kazdan_warner_defect"]) < 0.05
    assert run(["solve", "--set", "k=3", "--h", "0.4", "--max-iter", "1", "--out", str(bad)]) == EXIT_NUMERICAL
    assert (bad / "solve.manifest.json").exists()


def test_checks_json(tmp_path):
    assert run(["checks", "--which", "laa1,convexity", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "checks_laa1.json").read_text())["passed"]
    assert json.loads((tmp_path / "checks_convexity.json").read_text())["passed"]
    assert not (tmp_path / "checks_laa3.json").exists()


def test_fmt_round_trips_floats():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(True) == "true" and fmt(3) == "3"


def test_solve_refine_check(tmp_path):
    assert run(["solve", "--set", "k=3", "--h", "0.4", "--refine-check", "--out", str(tmp_path)]) == EXIT_OK
    ref = json.loads((tmp_path / "solution.bin.json").read_text())["refinement"]
    assert ref["h_coarse"] == pytest.approx(0.5) and ref["converged_coarse"]
    assert ref["consistent"] == (ref["relative_change"] < 0.2)
