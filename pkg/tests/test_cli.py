from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import pandas as pd
import pytest

from mvreinsure import main
from tests.helpers import P1_0, P2_0, constants_spec, run_config


@pytest.fixture
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(workdir: Path, **overrides: Any) -> str:
    path = workdir / "run.json"
    path.write_text(json.dumps(run_config(str(workdir / "out"), **overrides)))
    return str(path)


def test_without_command_prints_help(capsys: pytest.CaptureFixture[str]) -> None:
    assert main([]) == 0
    assert "usage: mvreinsure" in capsys.readouterr().out


class TestSolve:
    def test_writes_riccati_table(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        # Given the constants instance on 50 steps
        config = write_config(workdir)

        # When solving
        code = main(["solve", "-c", config])

        # Then sre.csv starts at the closed-form initial values
        assert code == 0
        frame = pd.read_csv(workdir / "out" / "sre.csv")
        first = frame.iloc[0]
        assert first["t"] == 0.0
        assert first["P1"] == pytest.approx(P1_0, rel=1e-9)
        assert first["P2"] == pytest.approx(P2_0, rel=1e-9)
        out = capsys.readouterr().out
        assert "Riccati solution" in out
        assert "sre.csv" in out

    def test_loading_order_is_a_model_error(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        spec = constants_spec(insurance={"intensity": 1.0, "loading": 0.3, "reinsurance_loading": 0.2})
        assert main(["solve", "-c", write_config(workdir, model=spec)]) == 2
        assert "ModelValidationError" in capsys.readouterr().err

    def test_brownian_adapted_is_rejected(self, workdir: Path) -> None:
        spec = constants_spec(coefficient_mode="brownian-adapted")
        assert main(["solve", "-c", write_config(workdir, model=spec)]) == 2

    def test_single_step_grid_cannot_be_checked(self, workdir: Path) -> None:
        assert main(["solve", "-c", write_config(workdir), "--grid-steps", "1"]) == 3

    def test_missing_config(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["solve"]) == 1
        assert "ConfigError" in capsys.readouterr().err

    def test_raise_exceptions(self, workdir: Path) -> None:
        from mvreinsure.exceptions import ConfigError

        with pytest.raises(ConfigError):
            main(["-e", "solve"])

    def test_json_report(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["solve", "-c", write_config(workdir), "-t", "json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "solve"
        values = next(s for s in report["sections"] if s["title"] == "Initial values")
        assert values["items"]["P2(0)"] == pytest.approx(P2_0, rel=1e-9)


class TestFrontier:
    def test_infeasible_target_keeps_its_row(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        config = write_config(workdir, frontier={"x": 1.0, "targets": [0.9, 1.2]})
        assert main(["frontier", "-c", config]) == 0
        frame = pd.read_csv(workdir / "out" / "frontier.csv")
        assert frame["status"].tolist() == ["infeasible", "ok"]
        assert frame["variance"].iloc[1] == pytest.approx(0.0355, abs=1e-4)
        assert math.isnan(frame["variance"].iloc[0])
        assert "warning: z=0.9" in capsys.readouterr().out

    def test_empty_targets(self, workdir: Path) -> None:
        config = write_config(workdir, frontier={"x": 1.0, "targets": []})
        assert main(["frontier", "-c", config]) == 4

    def test_markdown_report(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["f", "-c", write_config(workdir), "-t", "markdown"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("# Efficient frontier")
        assert "| z | stddev | variance | zeta_hat | status |" in out


class TestDumpConfig:
    def test_round_trip(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        # Given the effective configuration with command-line overrides
        config = write_config(workdir)
        assert main(["solve", "-c", config, "--dump-config", "--seed", "7", "--paths", "10"]) == 0
        dumped = capsys.readouterr().out

        # When it is fed back as the run configuration
        again = workdir / "again.json"
        again.write_text(dumped)
        assert main(["solve", "-c", str(again), "--dump-config"]) == 0

        # Then it reproduces itself and nothing was solved
        assert capsys.readouterr().out == dumped
        data = json.loads(dumped)
        assert data["simulation"]["seed"] == 7
        assert data["simulation"]["n_paths"] == 10
        assert not (workdir / "out" / "sre.csv").exists()


class TestSimulate:
    def test_single_path(self, workdir: Path) -> None:
        assert main(["simulate", "-c", write_config(workdir), "--paths", "1"]) == 0
        frame = pd.read_csv(workdir / "out" / "simulation.csv")
        assert list(frame.columns) == ["path", "X_T", "q_above_one_time"]
        assert len(frame) == 1

    def test_deterministic_output(self, workdir: Path) -> None:
        config = write_config(workdir)
        csv = workdir / "out" / "simulation.csv"
        assert main(["sim", "-c", config, "--paths", "200"]) == 0
        first = csv.read_bytes()
        assert main(["sim", "-c", config, "--paths", "200"]) == 0
        assert csv.read_bytes() == first

    def test_zero_strategy(self, workdir: Path) -> None:
        assert main(["sim", "-c", write_config(workdir), "--paths", "20", "--strategy", "zero"]) == 0
        frame = pd.read_csv(workdir / "out" / "simulation.csv")
        assert frame["X_T"].to_numpy() == pytest.approx(math.exp(0.05), rel=1e-3)

    def test_unknown_strategy(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["sim", "-c", write_config(workdir), "--strategy", "martingale"]) == 1
        assert "unknown strategy 'martingale'" in capsys.readouterr().err


class TestValidate:
    def test_single_path_fails(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["validate", "-c", write_config(workdir), "--paths", "1"]) == 1
        assert "SimulationError" in capsys.readouterr().err

    def test_wrong_analytic_variance_is_rejected(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        config = write_config(workdir)
        assert main(["validate", "-c", config, "--paths", "1000", "--analytic-variance-scale", "2"]) == 5
        report = json.loads((workdir / "out" / "validation.json").read_text())
        assert report["passed"] is False
        assert "variance" in [c["name"] for c in report["criteria"] if not c["passed"]]
        assert "ValidationRejectedError" in capsys.readouterr().err


class TestSettings:
    def test_show(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["settings"]) == 0
        out = capsys.readouterr().out
        assert "Riccati grid" in out
        assert "steps: 2000" in out
        assert "n_paths: 100000" in out
        assert "variance_rel: 0.05" in out

    def test_resolves_run_file(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        # Given a run file on 50 steps and 2000 paths
        config = write_config(workdir)

        # When showing the settings it resolves to
        code = main(["settings", "-c", config, "-t", "json"])

        # Then the run values win over the defaults and n_max is resolved
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        sections = {section["title"]: section["items"] for section in report["sections"]}
        assert sections["Riccati grid"]["steps"] == 50
        assert sections["Riccati grid"]["n_max"] >= 1
        assert sections["Monte Carlo"]["n_paths"] == 2000
        assert sections["Monte Carlo"]["chunk_size"] == 1000
        assert sections["Frontier"]["targets"] == [1.2]

    def test_generate(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["cfg", "--generate"]) == 0
        out = capsys.readouterr().out
        assert "[GENERAL]" in out
        assert "[tolerances]" in out


@pytest.mark.parametrize(
    ("command", "artifact"),
    [("solve", "sre.csv"), ("frontier", "frontier.csv"), ("validate", "validation.json")],
)
def test_artifacts_are_byte_identical_across_runs(command: str, artifact: str, workdir: Path) -> None:
    # Given one run file and seed
    config = write_config(workdir)
    path = workdir / "out" / artifact

    # When the command runs twice
    first_code = main([command, "-c", config, "--paths", "500"])
    first = path.read_bytes()
    second_code = main([command, "-c", config, "--paths", "500"])

    # Then the artifact is reproduced byte for byte
    assert first_code == second_code
    assert first_code in (0, 5)
    assert path.read_bytes() == first
