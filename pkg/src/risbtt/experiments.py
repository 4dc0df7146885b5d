"""
Sweep engine, figure presets, curve output and the validation report.

Axis conventions:
  snr_db  transmit SNR [dB] = axis value + snr_offset_db (p_s_dbm is kept and
          the noise power absorbs the change). With snr_reference = "mean" the
          axis value is E[gamma_L] in dB instead and the transmit SNR is solved
          per overlay.
  d_tl    talker-listener distance in metres; only gbar_x changes.
  n_elements
          RIS size; the overlay list is not used on this axis.
On the d_tl and n_elements axes, fixed_snr_db (when set) pins the transmit SNR.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

from .analytic import analyze, transmit_snr_for_mean
from .config import DEFAULT_D_TL_GRID, DEFAULT_OVERLAYS, DEFAULT_SNR_GRID, ExperimentConfig
from .errors import DomainError, EmitError
from .logging import get_logger
from .metrics import METRICS
from .models import (
    CurvePoint,
    McConfig,
    Metric,
    OutputFormat,
    QuadSpec,
    SnrReference,
    SourceMode,
    SweepAxis,
    SweepSpec,
    SystemParams,
)
from .montecarlo import estimate_metrics_from_gamma, simulate
from .supervisor import TrialSupervisor

log = get_logger(__name__)

CSV_COLUMNS = (
    "axis_name",
    "axis_value",
    "overlay_label",
    "metric",
    "analytic",
    "mc_value",
    "mc_stderr",
    "n_trials",
    "seed",
)
PRESETS = ("fig2", "fig3", "fig4", "fig5")
SWEPT_LABEL = "swept"


# ----- Sweep points -----


def overlay_label(n_elements: int) -> str:
    return "without_ris" if n_elements == 0 else f"N={n_elements}"


def _with_transmit_snr(params: SystemParams, snr_db: float) -> SystemParams:
    return replace(params, noise_dbm=params.p_s_dbm - snr_db)


def point_params(spec: SweepSpec, axis_value: float, overlay: int) -> SystemParams:
    """Scenario of one (axis value, overlay) cell of a sweep."""
    if spec.axis is SweepAxis.N_ELEMENTS:
        params = replace(spec.base, n_elements=int(axis_value))
    else:
        params = replace(spec.base, n_elements=overlay)

    if spec.axis is SweepAxis.SNR_DB:
        if spec.snr_reference is SnrReference.MEAN:
            gamma0 = transmit_snr_for_mean(params, 10.0 ** (axis_value / 10.0))
            return _with_transmit_snr(params, 10.0 * math.log10(gamma0))
        return _with_transmit_snr(params, axis_value + spec.snr_offset_db)

    if spec.axis is SweepAxis.D_TL:
        params = replace(params, d_tl=axis_value)
    if spec.fixed_snr_db is not None:
        params = _with_transmit_snr(params, spec.fixed_snr_db)
    return params


def _cells(spec: SweepSpec) -> Iterator[tuple[float, int, str]]:
    for x in spec.grid:
        if spec.axis is SweepAxis.N_ELEMENTS:
            yield x, int(x), SWEPT_LABEL
        else:
            for n in spec.overlays:
                yield x, n, overlay_label(n)


def run_sweep(
    spec: SweepSpec,
    quad: Optional[QuadSpec] = None,
    verify: bool = False,
    supervisor: Optional[TrialSupervisor] = None,
) -> list[CurvePoint]:
    """Evaluate every (axis value x overlay) cell in grid order.

    Each cell yields one CurvePoint per requested metric, with Monte Carlo
    fields filled when spec.mc is set. A worker pool is started once for the
    whole sweep when spec.mc asks for more than one worker.
    """
    if spec.mc is not None and spec.mc.workers > 1 and supervisor is None:
        with TrialSupervisor(num_workers=spec.mc.workers) as pool:
            return run_sweep(spec, quad, verify, pool)

    axis_name = spec.axis.name.lower()
    points: list[CurvePoint] = []
    for x, overlay, label in _cells(spec):
        params = point_params(spec, x, overlay)
        result = analyze(params, quad, verify)
        run = simulate(params, spec.mc, supervisor) if spec.mc is not None else None
        for metric in spec.metrics:
            est = run.metrics.metric(metric) if run is not None else None
            points.append(
                CurvePoint(
                    axis_name=axis_name,
                    axis_value=x,
                    overlay_label=label,
                    metric=metric,
                    analytic=result.metric(metric),
                    mc_value=None if est is None else est.value,
                    mc_stderr=None if est is None else est.std_error,
                    n_trials=None if spec.mc is None else spec.mc.n_trials,
                    seed=None if spec.mc is None else spec.mc.seed,
                )
            )
        METRICS.sweep_points.inc()
        log.info(
            "sweep point done",
            extra={"sweep": spec.name, "axis": axis_name, "axis_value": x, "overlay": label},
        )
    return points


# ----- Presets -----


def snr_sweep(cfg: ExperimentConfig, metrics: tuple[Metric, ...], name: str) -> SweepSpec:
    return SweepSpec(
        axis=SweepAxis.SNR_DB,
        grid=DEFAULT_SNR_GRID,
        overlays=DEFAULT_OVERLAYS,
        base=cfg.params,
        mc=cfg.mc_or_none,
        metrics=metrics,
        name=name,
    )


def preset(name: str, cfg: ExperimentConfig) -> SweepSpec:
    """Sweep behind one figure: fig2 OP, fig3 BER, fig4 AC against SNR, fig5 AC against d_TL.

    Raises:
        DomainError: for an unknown preset name.
    """
    if name == "fig2":
        return snr_sweep(cfg, (Metric.OP,), "fig2_op_vs_snr")
    if name == "fig3":
        return snr_sweep(cfg, (Metric.BER,), "fig3_ber_vs_snr")
    if name == "fig4":
        return snr_sweep(cfg, (Metric.AC,), "fig4_ac_vs_snr")
    if name == "fig5":
        fig5 = cfg.figures.fig5
        base = replace(cfg.params, d_tr=fig5.d_tr, d_rl=fig5.d_rl)
        if base != cfg.params:
            log.info(
                "fig5 preset replaces the RIS geometry",
                extra={
                    "params_d_tr": cfg.params.d_tr,
                    "params_d_rl": cfg.params.d_rl,
                    "d_tr": fig5.d_tr,
                    "d_rl": fig5.d_rl,
                    "transmit_snr_db": fig5.transmit_snr_db,
                },
            )
        return SweepSpec(
            axis=SweepAxis.D_TL,
            grid=DEFAULT_D_TL_GRID,
            overlays=DEFAULT_OVERLAYS,
            base=base,
            mc=cfg.mc_or_none,
            metrics=(Metric.AC,),
            snr_offset_db=0.0,
            fixed_snr_db=fig5.transmit_snr_db,
            name="fig5_ac_vs_dtl",
        )
    raise DomainError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")


def run_figures(
    cfg: ExperimentConfig,
    out_dir: Path,
    fmt: OutputFormat = OutputFormat.CSV,
    supervisor: Optional[TrialSupervisor] = None,
) -> list[Path]:
    """Write the four figure datasets; the three SNR figures share one sweep."""
    if cfg.mc_enabled and cfg.mc.workers > 1 and supervisor is None:
        with TrialSupervisor(num_workers=cfg.mc.workers) as pool:
            return run_figures(cfg, out_dir, fmt, pool)

    quad, verify = cfg.analysis.quad, cfg.analysis.verify_meijer
    shared = snr_sweep(cfg, (Metric.OP, Metric.BER, Metric.AC), "snr_figures")
    snr_points = run_sweep(shared, quad, verify, supervisor)

    written = []
    for name in ("fig2", "fig3", "fig4"):
        spec = preset(name, cfg)
        subset = [p for p in snr_points if p.metric in spec.metrics]
        written.append(emit(subset, fmt, out_dir / f"{spec.name}.{fmt.name.lower()}"))
    fig5 = preset("fig5", cfg)
    fig5_points = run_sweep(fig5, quad, verify, supervisor)
    written.append(emit(fig5_points, fmt, out_dir / f"{fig5.name}.{fmt.name.lower()}"))
    return written


# ----- Output -----


def _num(value: Optional[float]) -> str:
    return "" if value is None else format(value, ".12g")


def _json_num(value: Optional[float]) -> Optional[float]:
    return None if value is None else float(format(value, ".12g"))


def _record(p: CurvePoint) -> dict[str, Any]:
    return {
        "axis_name": p.axis_name,
        "axis_value": _json_num(p.axis_value),
        "overlay_label": p.overlay_label,
        "metric": p.metric.name.lower(),
        "analytic": _json_num(p.analytic),
        "mc_value": _json_num(p.mc_value),
        "mc_stderr": _json_num(p.mc_stderr),
        "n_trials": p.n_trials,
        "seed": p.seed,
    }


def emit(points: Sequence[CurvePoint], fmt: OutputFormat, path: Path) -> Path:
    """Write curve points as CSV or JSON.

    Columns (and JSON keys), in order: axis_name, axis_value, overlay_label,
    metric, analytic, mc_value, mc_stderr, n_trials, seed. Numbers carry 12
    significant digits; absent Monte Carlo fields are empty (CSV) or null (JSON).

    Raises:
        DomainError: if points is empty.
        EmitError: if the file cannot be written.
    """
    if not points:
        raise DomainError("no curve points to emit")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt is OutputFormat.JSON:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump([_record(p) for p in points], fh, indent=2)
                fh.write("\n")
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for p in points:
                    writer.writerow(
                        [
                            p.axis_name,
                            _num(p.axis_value),
                            p.overlay_label,
                            p.metric.name.lower(),
                            _num(p.analytic),
                            _num(p.mc_value),
                            _num(p.mc_stderr),
                            "" if p.n_trials is None else p.n_trials,
                            "" if p.seed is None else p.seed,
                        ]
                    )
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    log.info("curve data written", extra={"path": str(path), "rows": len(points)})
    return path


def _opt_float(value: Any) -> Optional[float]:
    return None if value in ("", None) else float(value)


def _opt_int(value: Any) -> Optional[int]:
    return None if value in ("", None) else int(value)


def load_points(path: Path) -> list[CurvePoint]:
    """Read back a file written by emit(); the format follows the suffix."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            if path.suffix == ".json":
                rows = json.load(fh)
            else:
                rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise EmitError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [
        CurvePoint(
            axis_name=row["axis_name"],
            axis_value=float(row["axis_value"]),
            overlay_label=row["overlay_label"],
            metric=Metric[row["metric"].upper()],
            analytic=float(row["analytic"]),
            mc_value=_opt_float(row["mc_value"]),
            mc_stderr=_opt_float(row["mc_stderr"]),
            n_trials=_opt_int(row["n_trials"]),
            seed=_opt_int(row["seed"]),
        )
        for row in rows
    ]


# ----- Validation -----


def _gap_summary(points: Sequence[CurvePoint], metric: Metric) -> dict[str, Any]:
    worst_abs, worst_z = 0.0, 0.0
    where: dict[str, Any] = {}
    for p in points:
        if p.metric is not metric or p.mc_value is None or p.mc_stderr is None:
            continue
        gap = abs(p.analytic - p.mc_value)
        if gap > worst_abs or not where:
            worst_abs = gap
            where = {"axis_value": p.axis_value, "overlay": p.overlay_label}
        if p.mc_stderr > 0:
            worst_z = max(worst_z, gap / p.mc_stderr)
    return {"max_abs_gap": worst_abs, "max_gap_stderr": worst_z, "at": where}


def _mode_gap(a: Sequence[CurvePoint], b: Sequence[CurvePoint], metric: Metric) -> float:
    gaps = [
        abs(pa.mc_value - pb.mc_value)
        for pa, pb in zip(a, b)
        if pa.metric is metric and pa.mc_value is not None and pb.mc_value is not None
    ]
    return max(gaps, default=0.0)


def _estimator_check(spec: SweepSpec, mc: McConfig, quad: Optional[QuadSpec]) -> dict[str, Any]:
    """Estimators on pure gamma samples against the analytic metrics of that gamma."""
    mid = spec.grid[len(spec.grid) // 2]
    out: dict[str, Any] = {}
    for x, overlay, label in _cells(replace(spec, grid=(mid,))):
        params = point_params(spec, x, overlay)
        result = analyze(params, quad)
        est = estimate_metrics_from_gamma(result.fit, params.gamma_th, mc.n_trials, mc.seed)
        zs = {}
        for metric in (Metric.OP, Metric.BER, Metric.AC):
            e = est.metric(metric)
            gap = abs(result.metric(metric) - e.value)
            zs[metric.name.lower()] = gap / e.std_error if e.std_error > 0 else 0.0
        out[label] = {"axis_value": x, "gap_stderr": zs}
    return out


def validation_report(
    cfg: ExperimentConfig,
    spec: Optional[SweepSpec] = None,
    supervisor: Optional[TrialSupervisor] = None,
) -> dict[str, Any]:
    """Compare analytic curves with Monte Carlo in shared and independent source modes.

    For each metric: the largest absolute analytic-vs-MC gap, the largest gap
    in standard errors, and the largest shared-vs-independent MC gap. Also
    checks the estimators against pure gamma samples at the middle grid value.
    """
    if cfg.mc.workers > 1 and supervisor is None:
        with TrialSupervisor(num_workers=cfg.mc.workers) as pool:
            return validation_report(cfg, spec, pool)

    base = spec or snr_sweep(cfg, (Metric.OP, Metric.BER, Metric.AC), "validation")
    quad = cfg.analysis.quad
    runs = {}
    for mode in (SourceMode.SHARED, SourceMode.INDEPENDENT):
        mc = replace(cfg.mc, source_mode=mode)
        runs[mode] = run_sweep(replace(base, mc=mc), quad, cfg.analysis.verify_meijer, supervisor)

    report: dict[str, Any] = {
        "name": base.name,
        "axis": base.axis.name.lower(),
        "n_trials": cfg.mc.n_trials,
        "seed": cfg.mc.seed,
        "snr_form": cfg.mc.snr_form.name.lower(),
        "modes": {
            mode.name.lower(): {m.name.lower(): _gap_summary(pts, m) for m in base.metrics}
            for mode, pts in runs.items()
        },
        "shared_vs_independent": {
            m.name.lower(): _mode_gap(runs[SourceMode.SHARED], runs[SourceMode.INDEPENDENT], m)
            for m in base.metrics
        },
        "estimator_check": _estimator_check(base, cfg.mc, quad),
    }
    return report


def write_report(report: dict[str, Any], path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
