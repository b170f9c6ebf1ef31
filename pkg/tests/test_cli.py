"""Tests for the command-line interface."""

import csv

import pytest
import yaml
from click.testing import CliRunner

from symocp.cli import main

from .test_problem_file import INTEGRATOR


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def invoke(runner, tmp_path, monkeypatch):
    monkeypatch.delenv("SYMOCP_BACKEND", raising=False)

    def _invoke(*args):
        return runner.invoke(main, ["--config-dir", str(tmp_path / "config"), *args],
                             env={"COLUMNS": "200"})

    return _invoke


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "symocp v0.1.0" in result.output


def test_help_without_command(invoke):
    result = invoke()
    assert result.exit_code == 0
    assert "solve" in result.output


@pytest.mark.parametrize("problem", ["integrator", "qubit"])
def test_validate_builtin(invoke, problem):
    result = invoke("--problem", problem, "validate")
    assert result.exit_code == 0
    assert "symmetry validated" in result.output


def test_validate_problem_file_with_wrong_group(invoke, tmp_path):
    data = {**INTEGRATOR, "generators": [{"dx": [-1], "du": [1]}]}
    path = tmp_path / "broken.yaml"
    path.write_text(yaml.safe_dump(data))
    result = invoke("--file", str(path), "validate")
    assert result.exit_code == 1
    assert "validation failed" in result.output


def test_dump_to_file(invoke, tmp_path):
    target = tmp_path / "program.txt"
    result = invoke("dump", "-d", "4", str(target))
    assert result.exit_code == 0
    assert target.read_text().startswith("# symocp conic program\n")


def test_dump_to_stdout(invoke):
    result = invoke("dump", "-d", "2", "--kind", "dense")
    assert result.exit_code == 0
    assert result.output.startswith("# symocp conic program\n")


def test_solve_writes_csv(invoke, tmp_path):
    out = tmp_path / "out"
    result = invoke("--out", str(out), "solve", "-d", "4")
    assert result.exit_code == 0
    assert "Cost bounds" in result.output
    with open(out / "integrator_d4_symmetric.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["status"] == "Optimal"
    assert rows[0]["kind"] == "symmetric"
    assert float(rows[0]["bound"]) <= 1.0 + 1e-6


def test_solve_compare(invoke):
    result = invoke("solve", "-d", "4", "--compare")
    assert result.exit_code == 0
    assert "variable ratio 0.553" in result.output


def test_solve_problem_file(invoke, tmp_path):
    path = tmp_path / "integrator.yaml"
    path.write_text(yaml.safe_dump(INTEGRATOR))
    result = invoke("--file", str(path), "solve", "-d", "2", "-k", "dense")
    assert result.exit_code == 0
    assert "Optimal" in result.output


def test_odd_order_is_an_error(invoke):
    result = invoke("solve", "-d", "3")
    assert result.exit_code == 1
    assert "must be even" in result.output


def test_select(invoke):
    result = invoke("--seed", "2", "select", "-d", "4")
    assert result.exit_code == 0
    assert "symmetric/select" in result.output


def test_lift(invoke, tmp_path):
    out = tmp_path / "lift"
    result = invoke("--out", str(out), "lift", "-d", "4")
    assert result.exit_code == 0
    assert "pinned" in result.output
    with open(out / "integrator_d4_lift.csv") as f:
        rows = list(csv.DictReader(f))
    assert [row["kind"] for row in rows] == ["symmetric", "lift"]


def test_recover_writes_curves(invoke, tmp_path):
    out = tmp_path / "curves"
    result = invoke("--out", str(out), "recover", "-d", "4", "--tgrid", "20", "--ygrid", "50")
    assert result.exit_code == 0
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["variant"] == "A1"
    assert report["d"] == 4
    assert (out / "integrator_x1_2.csv").exists()
    with open(out / "integrator_T.csv") as f:
        assert sum(1 for _ in f) == 21


def test_feastest_accepts_the_true_curve(invoke, tmp_path):
    out = tmp_path / "verdict"
    result = invoke("--out", str(out), "feastest", "-d", "4")
    assert result.exit_code == 0
    assert "Accept" in result.output
    verdict = yaml.safe_load((out / "integrator_d4_true_verdict.yaml").read_text())
    assert verdict["outcome"] == "Accept"


def test_feastest_unknown_candidate(invoke):
    result = invoke("feastest", "-d", "4", "-c", "zigzag")
    assert result.exit_code == 1
    assert "unknown integrator candidate" in result.output


def test_run_dispatches(invoke):
    result = invoke("run", "--mode", "solve", "-d", "4", "--kind", "dense")
    assert result.exit_code == 0
    assert "dense" in result.output


def test_run_passes_recovery_options(invoke, tmp_path):
    out = tmp_path / "run"
    result = invoke("--out", str(out), "run", "--mode", "recover", "-d", "4",
                    "--variant", "A2", "--pmode", "P1", "--tgrid", "20", "--ygrid", "50")
    assert result.exit_code == 0
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["variant"] == "A2"
    assert report["mode"] == "P1"


def test_run_passes_the_candidate(invoke):
    result = invoke("run", "--mode", "feastest", "-d", "4", "-c", "zigzag")
    assert result.exit_code == 1
    assert "unknown integrator candidate" in result.output


class TestConfigCommands:
    def test_set_and_show(self, invoke):
        result = invoke("config", "set", "tgrid", "250")
        assert result.exit_code == 0
        assert "Configuration saved" in result.output
        result = invoke("config", "show")
        assert result.exit_code == 0
        assert "250" in result.output

    def test_unknown_key(self, invoke):
        result = invoke("config", "set", "colour", "blue")
        assert result.exit_code == 1
        assert "Unknown configuration key" in result.output

    def test_unknown_backend(self, invoke):
        result = invoke("config", "set", "backend", "mosek")
        assert result.exit_code == 1

    def test_bad_environment_backend(self, invoke, monkeypatch):
        monkeypatch.setenv("SYMOCP_BACKEND", "mosek")
        result = invoke("validate")
        assert result.exit_code == 1
        assert "Configuration Error" in result.output
