from __future__ import annotations

import math
import os
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError, DomainError
from .models import (
    McConfig,
    Metric,
    QuadSpec,
    SnrForm,
    SnrReference,
    SourceMode,
    SweepAxis,
    SweepSpec,
    SystemParams,
)


@dataclass
class RuntimeConfig:
    """Process-level settings for risbtt runs.

    Every field is read from the environment when the object is created.
    No hot-reload is performed.

    Attributes:
        num_workers: Monte Carlo worker processes; 1 evaluates trials in-process.
            Env: RISBTT_NUM_WORKERS (default: 1)
        log_level: Python logging level name (DEBUG, INFO, WARNING, ERROR).
            Env: RISBTT_LOG_LEVEL (default: INFO)
        ipc_timeout: Seconds to wait for a worker result before raising IPCError.
            Env: RISBTT_IPC_TIMEOUT (default: 120.0)
    """

    num_workers: int = field(default_factory=lambda: int(os.getenv("RISBTT_NUM_WORKERS", "1")))
    log_level: str = field(default_factory=lambda: os.getenv("RISBTT_LOG_LEVEL", "INFO"))
    ipc_timeout: float = field(
        default_factory=lambda: float(os.getenv("RISBTT_IPC_TIMEOUT", "120.0"))
    )


def load_runtime_config() -> RuntimeConfig:
    """Load runtime settings from environment variables.

    Raises:
        ConfigError: if a variable does not parse or is out of range.
    """
    try:
        cfg = RuntimeConfig()
    except ValueError as exc:
        raise ConfigError(f"bad environment value: {exc}", field="env") from exc
    if cfg.num_workers < 1:
        raise ConfigError("must be >= 1", field="env.RISBTT_NUM_WORKERS")
    if cfg.ipc_timeout <= 0:
        raise ConfigError("must be > 0", field="env.RISBTT_IPC_TIMEOUT")
    return cfg


# ----- Experiment config (TOML) -----

DEFAULT_SNR_GRID = tuple(float(x) for x in range(0, 31))
DEFAULT_D_TL_GRID = tuple(1.0 + 0.25 * i for i in range(13))
DEFAULT_N_GRID = tuple(float(n) for n in range(0, 45, 5))
DEFAULT_OVERLAYS = (0, 10, 20, 30, 40)


@dataclass(frozen=True)
class AnalysisConfig:
    verify_meijer: bool = False
    quad: QuadSpec = field(default_factory=QuadSpec)


@dataclass(frozen=True)
class Fig5Config:
    """RIS placement and transmit SNR of the AC-vs-d_TL preset.

    These replace [params] d_tr, d_rl and the transmit SNR for that preset only.
    """

    d_tr: float = 1.8
    d_rl: float = 1.8
    transmit_snr_db: float = 20.0

    def __post_init__(self) -> None:
        for name in ("d_tr", "d_rl"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class FiguresConfig:
    fig5: Fig5Config = field(default_factory=Fig5Config)


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment file."""

    params: SystemParams = field(default_factory=SystemParams)
    mc: McConfig = field(default_factory=McConfig)
    mc_enabled: bool = True
    sweep: Optional[SweepSpec] = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    figures: FiguresConfig = field(default_factory=FiguresConfig)

    @property
    def mc_or_none(self) -> Optional[McConfig]:
        return self.mc if self.mc_enabled else None


_PARAM_KEYS = {
    "p_s_dbm": float,
    "noise_dbm": float,
    "d_st": float,
    "d_tl": float,
    "d_tr": float,
    "d_rl": float,
    "chi": float,
    "n_elements": int,
    "alpha": float,
    "beta": float,
    "delta1": float,
    "delta2": float,
    "lambda_t": float,
    "r_t": float,
}
_MC_KEYS = {"enabled", "n_trials", "seed", "source_mode", "snr_form", "workers"}
_SWEEP_KEYS = {
    "axis",
    "grid",
    "start",
    "stop",
    "step",
    "overlays",
    "metrics",
    "snr_offset_db",
    "snr_reference",
    "fixed_snr_db",
    "name",
}
_ANALYSIS_KEYS = {"verify_meijer", "rel_tol", "abs_tol", "max_refinements"}
_FIG5_KEYS = {"d_tr", "d_rl", "transmit_snr_db"}
_SECTIONS = {"params", "mc", "sweep", "analysis", "figures"}


def _reject_unknown(
    section: Mapping[str, Any], allowed: set[str] | Mapping[str, Any], path: str
) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError("unknown key", field=f"{path}.{key}" if path else key)


def _section(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = data.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError("must be a table", field=name)
    return value


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=path)
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError("must be finite", field=path)
    return out


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=path)
    return value


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", field=path)
    return value


def _as_enum(value: Any, enum: type[Any], path: str) -> Any:
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", field=path)
    try:
        return enum[value.upper().replace("-", "_")]
    except KeyError:
        choices = ", ".join(m.name.lower() for m in enum)
        raise ConfigError(f"unknown value {value!r} (choose from {choices})", field=path) from None


def _as_list(value: Any, path: str) -> list[Any]:
    if not isinstance(value, list):
        raise ConfigError(f"expected an array, got {value!r}", field=path)
    return value


def _parse_params(section: Mapping[str, Any]) -> SystemParams:
    _reject_unknown(section, _PARAM_KEYS, "params")
    kwargs: dict[str, Any] = {}
    for key, kind in _PARAM_KEYS.items():
        if key in section:
            path = f"params.{key}"
            kwargs[key] = (
                _as_int(section[key], path) if kind is int else _as_float(section[key], path)
            )
    try:
        return SystemParams(**kwargs)
    except DomainError as exc:
        raise ConfigError(str(exc), field=_field_from_message("params", str(exc))) from exc


def _field_from_message(prefix: str, message: str) -> str:
    head = message.split(" ", 1)[0]
    return f"{prefix}.{head}" if head.isidentifier() else prefix


def _parse_mc(section: Mapping[str, Any], runtime: RuntimeConfig) -> tuple[McConfig, bool]:
    _reject_unknown(section, _MC_KEYS, "mc")
    enabled = _as_bool(section.get("enabled", True), "mc.enabled")
    kwargs: dict[str, Any] = {"workers": runtime.num_workers}
    if "n_trials" in section:
        kwargs["n_trials"] = _as_int(section["n_trials"], "mc.n_trials")
    if "seed" in section:
        kwargs["seed"] = _as_int(section["seed"], "mc.seed")
    if "source_mode" in section:
        kwargs["source_mode"] = _as_enum(section["source_mode"], SourceMode, "mc.source_mode")
    if "snr_form" in section:
        kwargs["snr_form"] = _as_enum(section["snr_form"], SnrForm, "mc.snr_form")
    if "workers" in section:
        kwargs["workers"] = _as_int(section["workers"], "mc.workers")
    try:
        return McConfig(**kwargs), enabled
    except DomainError as exc:
        raise ConfigError(str(exc), field=_field_from_message("mc", str(exc))) from exc


def arange_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive grid start, start+step, ... <= stop, rounded to 12 decimals."""
    if step <= 0:
        raise ConfigError("must be > 0", field="sweep.step")
    if stop < start:
        raise ConfigError("must be >= sweep.start", field="sweep.stop")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 12) for i in range(count))


def _parse_sweep(
    section: Mapping[str, Any], params: SystemParams, mc: Optional[McConfig]
) -> SweepSpec:
    _reject_unknown(section, _SWEEP_KEYS, "sweep")
    axis = _as_enum(section.get("axis", "snr_db"), SweepAxis, "sweep.axis")

    if "grid" in section and any(k in section for k in ("start", "stop", "step")):
        raise ConfigError("give either grid or start/stop/step, not both", field="sweep.grid")
    if "grid" in section:
        raw = _as_list(section["grid"], "sweep.grid")
        grid = tuple(_as_float(v, f"sweep.grid[{i}]") for i, v in enumerate(raw))
        if not grid:
            raise ConfigError("must be nonempty", field="sweep.grid")
        for i in range(1, len(grid)):
            if grid[i] <= grid[i - 1]:
                raise ConfigError("grid must be strictly increasing", field=f"sweep.grid[{i}]")
    elif any(k in section for k in ("start", "stop", "step")):
        missing = [k for k in ("start", "stop", "step") if k not in section]
        if missing:
            raise ConfigError("start, stop and step go together", field=f"sweep.{missing[0]}")
        grid = arange_grid(
            _as_float(section["start"], "sweep.start"),
            _as_float(section["stop"], "sweep.stop"),
            _as_float(section["step"], "sweep.step"),
        )
    else:
        grid = {
            SweepAxis.SNR_DB: DEFAULT_SNR_GRID,
            SweepAxis.D_TL: DEFAULT_D_TL_GRID,
            SweepAxis.N_ELEMENTS: DEFAULT_N_GRID,
        }[axis]

    overlays = DEFAULT_OVERLAYS
    if "overlays" in section:
        raw = _as_list(section["overlays"], "sweep.overlays")
        overlays = tuple(_as_int(v, f"sweep.overlays[{i}]") for i, v in enumerate(raw))
        for i, n in enumerate(overlays):
            if n < 0:
                raise ConfigError("overlay N must be >= 0", field=f"sweep.overlays[{i}]")
        if not overlays:
            raise ConfigError("must be nonempty", field="sweep.overlays")

    metrics: tuple[Metric, ...] = (Metric.OP, Metric.BER, Metric.AC)
    if "metrics" in section:
        raw = _as_list(section["metrics"], "sweep.metrics")
        metrics = tuple(_as_enum(v, Metric, f"sweep.metrics[{i}]") for i, v in enumerate(raw))
        if not metrics:
            raise ConfigError("must be nonempty", field="sweep.metrics")

    kwargs: dict[str, Any] = {}
    if "snr_offset_db" in section:
        kwargs["snr_offset_db"] = _as_float(section["snr_offset_db"], "sweep.snr_offset_db")
    if "snr_reference" in section:
        kwargs["snr_reference"] = _as_enum(
            section["snr_reference"], SnrReference, "sweep.snr_reference"
        )
    if "fixed_snr_db" in section:
        kwargs["fixed_snr_db"] = _as_float(section["fixed_snr_db"], "sweep.fixed_snr_db")
    if "name" in section:
        name = section["name"]
        if not isinstance(name, str) or not name:
            raise ConfigError("expected a nonempty string", field="sweep.name")
        kwargs["name"] = name

    try:
        return SweepSpec(
            axis=axis,
            grid=grid,
            overlays=overlays,
            base=params,
            mc=mc,
            metrics=metrics,
            **kwargs,
        )
    except DomainError as exc:
        raise ConfigError(str(exc), field="sweep") from exc


def _parse_analysis(section: Mapping[str, Any]) -> AnalysisConfig:
    _reject_unknown(section, _ANALYSIS_KEYS, "analysis")
    verify = _as_bool(section.get("verify_meijer", False), "analysis.verify_meijer")
    kwargs: dict[str, Any] = {}
    for key in ("rel_tol", "abs_tol"):
        if key in section:
            kwargs[key] = _as_float(section[key], f"analysis.{key}")
    if "max_refinements" in section:
        kwargs["max_refinements"] = _as_int(section["max_refinements"], "analysis.max_refinements")
    try:
        return AnalysisConfig(verify_meijer=verify, quad=QuadSpec(**kwargs))
    except DomainError as exc:
        raise ConfigError(str(exc), field=_field_from_message("analysis", str(exc))) from exc


def _parse_figures(section: Mapping[str, Any]) -> FiguresConfig:
    _reject_unknown(section, {"fig5"}, "figures")
    fig5 = section.get("fig5", {})
    if not isinstance(fig5, Mapping):
        raise ConfigError("must be a table", field="figures.fig5")
    _reject_unknown(fig5, _FIG5_KEYS, "figures.fig5")
    kwargs = {key: _as_float(fig5[key], f"figures.fig5.{key}") for key in _FIG5_KEYS if key in fig5}
    try:
        return FiguresConfig(fig5=Fig5Config(**kwargs))
    except DomainError as exc:
        raise ConfigError(str(exc), field=_field_from_message("figures.fig5", str(exc))) from exc


def parse_experiment_config(
    data: Mapping[str, Any], runtime: Optional[RuntimeConfig] = None
) -> ExperimentConfig:
    """Validate a decoded TOML document into an ExperimentConfig.

    Every key is optional; an empty document gives the default scenario.

    Raises:
        ConfigError: with the dotted path of the first offending key.
    """
    rt = runtime or load_runtime_config()
    _reject_unknown(data, _SECTIONS, "")
    params = _parse_params(_section(data, "params"))
    mc, enabled = _parse_mc(_section(data, "mc"), rt)
    sweep = None
    if "sweep" in data:
        sweep = _parse_sweep(_section(data, "sweep"), params, mc if enabled else None)
    analysis = _parse_analysis(_section(data, "analysis"))
    figures = _parse_figures(_section(data, "figures"))
    return ExperimentConfig(
        params=params,
        mc=mc,
        mc_enabled=enabled,
        sweep=sweep,
        analysis=analysis,
        figures=figures,
    )


def load_experiment_config(
    path: Optional[Path] = None, runtime: Optional[RuntimeConfig] = None
) -> ExperimentConfig:
    """Read and validate an experiment TOML file (None gives the defaults).

    Raises:
        ConfigError: if the file is missing, is not valid TOML, or fails validation.
    """
    if path is None:
        return parse_experiment_config({}, runtime)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", field="config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", field="config") from exc
    return parse_experiment_config(data, runtime)


def apply_overrides(
    cfg: ExperimentConfig,
    *,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    independent_source: bool = False,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """Layer command-line flags over a loaded config."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if trials is not None:
        changes["n_trials"] = trials
    if independent_source:
        changes["source_mode"] = SourceMode.INDEPENDENT
    if workers is not None:
        changes["workers"] = workers
    if not changes:
        return cfg
    try:
        mc = replace(cfg.mc, **changes)
    except DomainError as exc:
        raise ConfigError(str(exc), field=_field_from_message("mc", str(exc))) from exc
    sweep = cfg.sweep
    if sweep is not None and sweep.mc is not None:
        sweep = replace(sweep, mc=mc)
    return replace(cfg, mc=mc, sweep=sweep)
