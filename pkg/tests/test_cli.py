import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from boardsim.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def test_budget(capsys):
    assert run("budget", 32, "fir", 333000) == 0
    out = capsys.readouterr().out
    assert "utilization             0.07104" in out
    assert "macs_per_second         2.1312e+07" in out


def test_budget_iir_and_bad_args(capsys):
    assert run("budget", 8, "iir", 1000, "--na", 2) == 0
    assert "macs_per_sample         20" in capsys.readouterr().out
    assert run("budget", 0, "fir", 1000) == 2
    with pytest.raises(SystemExit) as err:
        run("budget", 8, "lattice", 1000)
    assert err.value.code == 2


def test_bcm_writes_outputs(tmp_path, capsys):
    assert run("bcm", "--config", CONFIGS / "bcm.cfg", "--out", tmp_path) == 0
    for name in ("report.csv", "run.csv", "summary.txt", "manifest.json"):
        assert (tmp_path / name).exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "bcm"
    assert manifest["seeds"]["component_seeds"] == [11]
    assert "improvement" in capsys.readouterr().out


def test_bcm_nyquist_is_config_error(tmp_path, capsys):
    text = (CONFIGS / "bcm.cfg").read_text().replace("freq_hz = 16650", "freq_hz = 200000")
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run("bcm", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "component.beam.freq_hz" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert run("bcm", "--config", tmp_path / "none.cfg", "--out", tmp_path) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    text = (CONFIGS / "ident.cfg").read_text().replace("mu = 0.01", "mu = 5.0")
    cfg = tmp_path / "div.cfg"
    cfg.write_text(text)
    assert run("ident", "--config", cfg, "--out", tmp_path / "o") == 3
    assert "runtime error" in capsys.readouterr().err


def test_seed_override_changes_output(tmp_path):
    run("bcm", "--config", CONFIGS / "bcm.cfg", "--out", tmp_path / "a")
    run("bcm", "--config", CONFIGS / "bcm.cfg", "--out", tmp_path / "b", "--seed", 99)
    assert (tmp_path / "a" / "run.csv").read_bytes() != (tmp_path / "b" / "run.csv").read_bytes()
    seeds = json.loads((tmp_path / "b" / "manifest.json").read_text())["seeds"]
    assert seeds["seed_override"] == 99 and seeds["component_seeds"] == [99]


def test_ident_reports_plant_error(tmp_path, capsys):
    assert run("ident", "--config", CONFIGS / "ident.cfg", "--out", tmp_path) == 0
    line = [s for s in capsys.readouterr().out.splitlines() if "|b - h|inf" in s][0]
    assert float(line.split("=")[1]) <= 0.01
    assert (tmp_path / "coefficients.csv").read_text().startswith("index,value\n")


def test_ident_iir_dual_core(tmp_path, capsys):
    assert run("ident", "--config", CONFIGS / "iir.cfg", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "dual-core" in out
    err_a = float([s for s in out.splitlines() if "|a - a_plant|" in s][0].split("=")[1])
    assert err_a <= 0.02


def test_predict(tmp_path, capsys):
    assert run("predict", "--config", CONFIGS / "ale.cfg", "--out", tmp_path) == 0
    improvement = [s for s in capsys.readouterr().out.splitlines() if "improvement" in s][0]
    assert float(improvement.split()[1]) >= 6.0


def test_vme_pass_and_fail(tmp_path):
    assert run("vme", "--script", CONFIGS / "bus.txt", "--out", tmp_path / "ok") == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("D16 R 000100 EXPECT 1234\n")
    assert run("vme", "--script", bad, "--out", tmp_path / "bad") == 1
    assert "FAIL" in (tmp_path / "bad" / "summary.txt").read_text()
    broken = tmp_path / "broken.txt"
    broken.write_text("D16 Q\n")
    assert run("vme", "--script", broken, "--out", tmp_path / "x") == 2


def test_topology_mismatch(tmp_path):
    assert run("predict", "--config", CONFIGS / "ident.cfg", "--out", tmp_path) == 2


def test_console_script_and_log_env(tmp_path):
    exe = shutil.which("boardsim")
    cmd = [exe] if exe else [sys.executable, "-m", "boardsim.cli"]
    env = dict(os.environ, BOARD_SIM_LOG="DEBUG")
    proc = subprocess.run(cmd + ["budget", "32", "fir", "333000"], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.07104" in proc.stdout
