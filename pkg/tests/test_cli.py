"""Command-line interface: exit codes, outputs and the mutation hook."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from quadfl import cli
from quadfl import fl_transform as fl

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_hover_exits_zero_without_drift(tmp_path, capsys):
    assert run("simulate", SCENARIOS / "hover.yaml", "--out", tmp_path, "--duration", 10) == 0
    summary = (tmp_path / "summary.txt").read_text()
    drift = float(summary.split("max position drift from initial:")[1].split()[0])
    assert drift < 1e-9
    assert "domain violations: 0" in summary and "status: ok" in summary
    assert "max cond(E):" in summary and "final tracking error:" in summary
    assert capsys.readouterr().out == summary


def test_zero_thrust_refused(tmp_path, capsys):
    code = run("simulate", SCENARIOS / "zero_thrust.yaml", "--out", tmp_path)
    assert code == cli.EXIT_DOMAIN
    assert "refusing to integrate" in capsys.readouterr().err
    assert not (tmp_path / "telemetry.csv").exists()


def test_circle_csv_rows_and_columns(tmp_path):
    assert run("simulate", SCENARIOS / "circle.yaml", "--out", tmp_path, "--duration", 1.0) == 0
    lines = (tmp_path / "telemetry.csv").read_text().splitlines()
    assert lines[0].startswith("# quadfl-telemetry v")
    assert len(lines[1].split(",")) >= 40
    assert len(lines) - 2 == 1001
    row = lines[2].split(",")
    assert len(row) == len(lines[1].split(","))


def test_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("simulate", SCENARIOS / "circle_offset.yaml", "--out", d, "--duration", 1.0) == 0
    assert (a / "telemetry.csv").read_bytes() == (b / "telemetry.csv").read_bytes()
    assert (a / "summary.txt").read_bytes() == (b / "summary.txt").read_bytes()


def test_dt_override(tmp_path):
    assert run("simulate", SCENARIOS / "circle.yaml", "--out", tmp_path,
               "--dt", 0.01, "--duration", 1.0) == 0
    assert len((tmp_path / "telemetry.csv").read_text().splitlines()) == 2 + 101


@pytest.mark.parametrize("argv", [
    ["simulate", "does-not-exist.yaml"],
    ["simulate", SCENARIOS / "hover.yaml", "--dt", "-1"],
    ["simulate", SCENARIOS / "hover.yaml", "--lambda-pos", "0"],
    ["verify", "--samples", "-1"],
    ["trim", "--gravity", "0"],
])
def test_config_errors_exit_two(argv, tmp_path):
    if argv[0] == "simulate":
        argv = argv + ["--out", tmp_path]
    assert run(*argv) == cli.EXIT_CONFIG


def test_bad_yaml_exits_two(tmp_path):
    f = tmp_path / "s.yaml"
    f.write_text("reference: {kind: circle, radius_m: 2, colour: red}\n")
    assert run("simulate", f, "--out", tmp_path) == cli.EXIT_CONFIG


def test_domain_abort_writes_partial_telemetry(tmp_path):
    f = tmp_path / "s.yaml"
    f.write_text(
        "duration_s: 6.0\n"
        "initial: {mode: trim}\n"
        "controller:\n  mode: open_loop\n  pulses: [{start_s: 0, stop_s: 6, v: [20, 0, 0, 0]}]\n"
    )
    assert run("simulate", f, "--out", tmp_path) == cli.EXIT_DOMAIN
    data = np.loadtxt(tmp_path / "telemetry.csv", delimiter=",", skiprows=2)
    assert np.all(np.isfinite(data)) and 0 < len(data) < 6001
    assert "aborted" in (tmp_path / "summary.txt").read_text()


def test_verify_writes_ledgers(tmp_path, capsys):
    assert run("verify", "--samples", 300, "--seed", 3, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "0 failed" in out
    text = (tmp_path / "verify_ledger.txt").read_text().splitlines()
    records = [json.loads(line) for line in (tmp_path / "verify_ledger.jsonl").read_text().splitlines()]
    assert len(text) == len(records)
    keys = {r["key"] for r in records}
    assert {"snap-identity", "decoupling-determinant", "feedback-round-trip",
            "linearization-exactness", "domain-guard"} <= keys
    assert all(r["status"] == "pass" for r in records)


def test_verify_zero_samples_skips(capsys):
    assert run("verify", "--samples", 0) == 0
    out = capsys.readouterr().out
    assert "SKIP" in out and "skipped" in out


def test_flipped_h_r_sign_fails_verification(monkeypatch, capsys):
    orig = fl.h_r
    monkeypatch.setattr(fl, "h_r", lambda x, p=None: -orig(x, p))
    assert run("verify", "--samples", 200) == cli.EXIT_VERIFY
    captured = capsys.readouterr()
    assert "snap-identity" in captured.err
    assert any(line.startswith("FAIL") and "snap-identity" in line for line in captured.out.splitlines())


def test_trim(capsys):
    assert run("trim", "--psi", 1.2, "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["state"][8] == 1.2 and doc["state"][12] == 9.81
    assert doc["command"] == [0, 0, 0, 0]
    assert run("trim", "--position", 1, 2, 3) == 0
    assert "zeta_m_s2:    9.81" in capsys.readouterr().out


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "quadfl.cli", "trim", "--json"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["state"][12] == 9.81
