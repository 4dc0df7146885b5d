from __future__ import annotations

from pathlib import Path

import pytest

from risbtt.config import (
    DEFAULT_D_TL_GRID,
    DEFAULT_SNR_GRID,
    Fig5Config,
    FiguresConfig,
    RuntimeConfig,
    apply_overrides,
    arange_grid,
    load_experiment_config,
    load_runtime_config,
    parse_experiment_config,
)
from risbtt.errors import ConfigError
from risbtt.models import Metric, SnrForm, SnrReference, SourceMode, SweepAxis, SystemParams

DEFAULT_TOML = Path(__file__).resolve().parent.parent / "config" / "default.toml"


@pytest.fixture()
def runtime() -> RuntimeConfig:
    return RuntimeConfig(num_workers=1, log_level="WARNING", ipc_timeout=5.0)


class TestRuntimeConfig:
    def test_defaults(self, monkeypatch: pytest.MonkeyPatch) -> None:
        for var in ("RISBTT_NUM_WORKERS", "RISBTT_LOG_LEVEL", "RISBTT_IPC_TIMEOUT"):
            monkeypatch.delenv(var, raising=False)
        cfg = load_runtime_config()
        assert cfg.num_workers == 1
        assert cfg.log_level == "INFO"
        assert cfg.ipc_timeout == 120.0

    def test_environment_overrides(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("RISBTT_NUM_WORKERS", "8")
        monkeypatch.setenv("RISBTT_LOG_LEVEL", "DEBUG")
        cfg = load_runtime_config()
        assert cfg.num_workers == 8
        assert cfg.log_level == "DEBUG"

    def test_unparseable_value(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("RISBTT_NUM_WORKERS", "many")
        with pytest.raises(ConfigError) as info:
            load_runtime_config()
        assert info.value.field == "env"

    def test_out_of_range_value(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("RISBTT_NUM_WORKERS", "0")
        with pytest.raises(ConfigError) as info:
            load_runtime_config()
        assert info.value.field == "env.RISBTT_NUM_WORKERS"


class TestExperimentConfig:
    def test_empty_document_gives_defaults(self, runtime: RuntimeConfig) -> None:
        cfg = parse_experiment_config({}, runtime)
        assert cfg.params == SystemParams()
        assert cfg.mc.n_trials == 100_000
        assert cfg.mc.seed == 42
        assert cfg.mc_enabled
        assert cfg.sweep is None
        assert not cfg.analysis.verify_meijer

    def test_committed_default_file_matches_defaults(self, runtime: RuntimeConfig) -> None:
        cfg = load_experiment_config(DEFAULT_TOML, runtime)
        assert cfg.params == SystemParams()
        assert cfg.mc.source_mode is SourceMode.SHARED
        assert cfg.mc.snr_form is SnrForm.EXACT
        assert cfg.sweep is not None
        assert cfg.sweep.grid == DEFAULT_SNR_GRID
        assert cfg.sweep.overlays == (0, 10, 20, 30, 40)
        assert cfg.sweep.snr_offset_db == 21.0
        assert cfg.sweep.mc == cfg.mc
        assert cfg.figures == FiguresConfig()

    def test_sections_parsed(self, runtime: RuntimeConfig) -> None:
        cfg = parse_experiment_config(
            {
                "params": {"n_elements": 40, "d_tl": 2.5},
                "mc": {"enabled": False, "snr_form": "power_sum", "workers": 3},
                "sweep": {
                    "axis": "d_tl",
                    "overlays": [0, 40],
                    "metrics": ["ac"],
                    "fixed_snr_db": 20,
                    "snr_reference": "mean",
                },
                "analysis": {"verify_meijer": True, "rel_tol": 1e-12},
            },
            runtime,
        )
        assert cfg.params.n_elements == 40
        assert cfg.mc.snr_form is SnrForm.POWER_SUM
        assert cfg.mc.workers == 3
        assert cfg.mc_or_none is None
        assert cfg.sweep is not None
        assert cfg.sweep.axis is SweepAxis.D_TL
        assert cfg.sweep.grid == DEFAULT_D_TL_GRID
        assert cfg.sweep.metrics == (Metric.AC,)
        assert cfg.sweep.fixed_snr_db == 20.0
        assert cfg.sweep.snr_reference is SnrReference.MEAN
        assert cfg.sweep.mc is None
        assert cfg.analysis.quad.rel_tol == 1e-12

    def test_figures_section_parsed(self, runtime: RuntimeConfig) -> None:
        cfg = parse_experiment_config(
            {"figures": {"fig5": {"d_rl": 3.0, "transmit_snr_db": 25}}}, runtime
        )
        assert cfg.figures.fig5 == Fig5Config(d_tr=1.8, d_rl=3.0, transmit_snr_db=25.0)

    def test_workers_fall_back_to_runtime(self) -> None:
        rt = RuntimeConfig(num_workers=6, log_level="INFO", ipc_timeout=1.0)
        assert parse_experiment_config({}, rt).mc.workers == 6

    @pytest.mark.parametrize(
        ("doc", "field"),
        [
            ({"params": {"d_tl": -1.0}}, "params.d_tl"),
            ({"params": {"n_elements": 2.5}}, "params.n_elements"),
            ({"params": {"colour": 1}}, "params.colour"),
            ({"mc": {"source_mode": "split"}}, "mc.source_mode"),
            ({"mc": {"n_trials": 0}}, "mc.n_trials"),
            ({"sweep": {"grid": [0.0, 1.0, 1.0]}}, "sweep.grid[2]"),
            ({"sweep": {"grid": [0.0, "x"]}}, "sweep.grid[1]"),
            ({"sweep": {"overlays": [10, -1]}}, "sweep.overlays[1]"),
            ({"sweep": {"start": 0.0, "stop": 3.0}}, "sweep.step"),
            ({"sweep": {"metrics": ["op", "snr"]}}, "sweep.metrics[1]"),
            ({"analysis": {"rel_tol": 0.0}}, "analysis.rel_tol"),
            ({"figures": {"fig5": {"d_rl": 0.0}}}, "figures.fig5.d_rl"),
            ({"figures": {"fig5": {"height": 2.0}}}, "figures.fig5.height"),
            ({"figures": {"fig6": {}}}, "figures.fig6"),
            ({"extra": {}}, "extra"),
        ],
    )
    def test_errors_carry_field_path(
        self, runtime: RuntimeConfig, doc: dict, field: str
    ) -> None:
        with pytest.raises(ConfigError) as info:
            parse_experiment_config(doc, runtime)
        assert info.value.field == field
        assert str(info.value).startswith(field)

    def test_grid_and_range_are_exclusive(self, runtime: RuntimeConfig) -> None:
        with pytest.raises(ConfigError, match="not both"):
            parse_experiment_config({"sweep": {"grid": [1.0], "start": 0.0}}, runtime)

    def test_missing_file(self, tmp_path: Path, runtime: RuntimeConfig) -> None:
        with pytest.raises(ConfigError, match="not found") as info:
            load_experiment_config(tmp_path / "absent.toml", runtime)
        assert info.value.field == "config"

    def test_invalid_toml(self, tmp_path: Path, runtime: RuntimeConfig) -> None:
        path = tmp_path / "bad.toml"
        path.write_text("[params\nd_tl = 1\n")
        with pytest.raises(ConfigError) as info:
            load_experiment_config(path, runtime)
        assert info.value.field == "config"

    def test_empty_file_reproduces_defaults(self, tmp_path: Path, runtime: RuntimeConfig) -> None:
        path = tmp_path / "empty.toml"
        path.write_text("")
        assert load_experiment_config(path, runtime) == parse_experiment_config({}, runtime)


class TestGrid:
    def test_inclusive_grid(self) -> None:
        assert arange_grid(1.0, 4.0, 0.25) == DEFAULT_D_TL_GRID
        assert len(arange_grid(0.0, 30.0, 1.0)) == 31

    def test_rounding_keeps_endpoint(self) -> None:
        grid = arange_grid(0.0, 1.0, 0.1)
        assert grid[-1] == 1.0
        assert grid[3] == 0.3

    def test_bad_step(self) -> None:
        with pytest.raises(ConfigError) as info:
            arange_grid(0.0, 1.0, 0.0)
        assert info.value.field == "sweep.step"


class TestOverrides:
    def test_flags_replace_file_values(self, runtime: RuntimeConfig) -> None:
        cfg = load_experiment_config(DEFAULT_TOML, runtime)
        out = apply_overrides(cfg, seed=7, trials=500, independent_source=True, workers=4)
        assert out.mc.seed == 7
        assert out.mc.n_trials == 500
        assert out.mc.source_mode is SourceMode.INDEPENDENT
        assert out.mc.workers == 4
        assert out.sweep is not None and out.sweep.mc == out.mc

    def test_no_flags_is_identity(self, runtime: RuntimeConfig) -> None:
        cfg = parse_experiment_config({}, runtime)
        assert apply_overrides(cfg) is cfg

    def test_invalid_override(self, runtime: RuntimeConfig) -> None:
        with pytest.raises(ConfigError) as info:
            apply_overrides(parse_experiment_config({}, runtime), trials=0)
        assert info.value.field == "mc.n_trials"
