import csv
import json

import pytest

from critns.cli import SUBCOMMANDS, main

CONFIG = """\
[suite]
output = out

[scenario.tg]
datum = taylor_green
grid = 16
dt = 0.0625
horizon = 0.125
audits = divergence, taylor_green

[scenario.vortex]
datum = localized_vortex
width = 0.5
amplitude = 0.5
grid = 16
dt = 0.0625
horizon = 0.125
audits = divergence

[profiles]
grid = 64
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "suite.ini"
    p.write_text(CONFIG)
    return p


def run(config, tmp_path, *args):
    out = tmp_path / "o"
    return main([*args, "--config", str(config), "--output", str(out)]), out


def test_subcommand_list():
    assert set(SUBCOMMANDS) == {"simulate", "audit", "scaling-check", "profiles", "contraction-demo",
                                "pressure", "compactness"}


def test_simulate_skips_audits(config, tmp_path):
    code, out = run(config, tmp_path, "simulate")
    assert code == 0
    assert (out / "tg" / "norms.csv").is_file()
    assert not (out / "tg" / "audits.json").exists()


def test_audit(config, tmp_path, capsys):
    code, out = run(config, tmp_path, "audit")
    assert code == 0
    assert "taylor_green: pass" in capsys.readouterr().out
    assert json.loads((out / "summary.json").read_text())["passed"] == 2


def test_audit_failure_exit_code(tmp_path):
    cfg = tmp_path / "f.ini"
    cfg.write_text(CONFIG.replace("audits = divergence\n", "audits = divergence\ntol.divergence = -1\n"))
    assert run(cfg, tmp_path, "audit")[0] == 1


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario.a]\ndatum = taylor_green\nhorizon = 1\nspeed = 3\n")
    assert run(cfg, tmp_path, "audit")[0] == 2
    assert "line 4" in capsys.readouterr().err
    assert run(tmp_path / "missing.ini", tmp_path, "audit")[0] == 2


def test_contraction_demo(config, tmp_path):
    code, out = run(config, tmp_path, "contraction-demo")
    assert code == 0
    rows = list(csv.DictReader((out / "contraction.csv").open()))
    assert len(rows) == 50 and max(float(r["error"]) for r in rows) <= 1e-12
    assert (out / "figures" / "contraction_residuals.png").is_file()


def test_scaling_check(config, tmp_path):
    code, out = run(config, tmp_path, "scaling-check")
    assert code == 0
    rows = list(csv.DictReader((out / "scaling.csv").open()))
    assert {r["scenario"] for r in rows} == {"tg", "vortex"}
    assert (out / "figures" / "scaling.png").is_file()


def test_profiles(config, tmp_path):
    code, out = run(config, tmp_path, "profiles")
    rows = list(csv.DictReader((out / "profiles.csv").open()))
    assert [r["sweep"] for r in rows] == ["ratio"] * 3 + ["separation"] * 3
    assert (out / "figures" / "profiles.png").is_file()
    assert code == 0


def test_pressure(config, tmp_path):
    code, out = run(config, tmp_path, "pressure")
    assert code == 0
    report = json.loads((out / "pressure.json").read_text())
    assert report["tg"]["oracle_error"] <= 1e-12
    assert (out / "figures" / "pressure_vortex.png").is_file()


def test_compactness(config, tmp_path):
    code, out = run(config, tmp_path, "compactness", "--samples", "3")
    assert code == 0
    report = json.loads((out / "compactness.json").read_text())
    assert len(report["tg"]["sample_times"]) == 3
    assert max(max(r) for r in report["tg"]["distances"]) <= 1e-12


def test_threads_env(config, tmp_path, monkeypatch):
    monkeypatch.setenv("CRITNS_THREADS", "2")
    assert run(config, tmp_path, "simulate")[0] == 0
