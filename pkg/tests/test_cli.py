from __future__ import annotations

import json
from pathlib import Path

import pytest

from risbtt.cli import EXIT_FAILURE, EXIT_INVALID, EXIT_OK, build_parser, main
from risbtt.errors import NonConvergenceError


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("RISBTT_LOG_LEVEL", "WARNING")
    monkeypatch.delenv("RISBTT_NUM_WORKERS", raising=False)


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return path


class TestParser:
    def test_verbs_and_flags(self) -> None:
        args = build_parser().parse_args(
            ["figs", "--seed", "0x2a", "--trials", "10", "--independent-source", "--format", "json"]
        )
        assert args.command == "figs"
        assert args.seed == 42
        assert args.trials == 10
        assert args.independent_source
        assert args.fmt == "json"

    def test_seed_must_fit_64_bits(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(["point", "--seed", str(2**64)])

    def test_verb_required(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestPoint:
    def test_prints_metrics(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        cfg = _write(tmp_path, "[mc]\nn_trials = 1000\n")
        assert main(["point", "--config", str(cfg), "--quiet"]) == EXIT_OK
        record = json.loads(capsys.readouterr().out)
        assert record["gamma_th"] == 3.0
        assert 0.0 <= record["op"] <= 1.0
        assert record["success_probability"] == pytest.approx(1.0 - record["op"])
        assert record["mc"]["n_trials"] == 1000
        assert set(record["mc"]) >= {"op", "ber", "ac"}

    def test_analytic_only(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        cfg = _write(tmp_path, "[mc]\nenabled = false\n[params]\nn_elements = 0\n")
        assert main(["point", "--config", str(cfg), "--quiet"]) == EXIT_OK
        record = json.loads(capsys.readouterr().out)
        assert record["k"] == pytest.approx(1.0 / 3.0)
        assert "mc" not in record


class TestSweepVerb:
    def test_writes_named_file(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        cfg = _write(
            tmp_path,
            "[mc]\nenabled = false\n"
            "[sweep]\nname = \"short\"\ngrid = [0.0, 10.0]\noverlays = [0, 20]\n",
        )
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(cfg), "--out", str(out), "--format", "json"])
        assert code == EXIT_OK
        records = json.loads((out / "short.json").read_text())
        assert len(records) == 2 * 2 * 3


class TestErrors:
    def test_config_error_exit_code_and_record(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        cfg = _write(tmp_path, "[params]\nd_tl = -2.0\n")
        assert main(["point", "--config", str(cfg)]) == EXIT_INVALID
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"
        assert record["field"] == "params.d_tl"

    def test_missing_config_file(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["point", "--config", str(tmp_path / "nope.toml")]) == EXIT_INVALID
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["field"] == "config"

    def test_numerical_failure_exit_code(
        self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]
    ) -> None:
        def fail(*_: object, **__: object) -> None:
            raise NonConvergenceError("quadrature exhausted")

        monkeypatch.setattr("risbtt.cli.analyze", fail)
        cfg = _write(tmp_path, "[mc]\nenabled = false\n")
        assert main(["point", "--config", str(cfg), "--quiet"]) == EXIT_FAILURE
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "NonConvergenceError"
        assert record["field"] is None
