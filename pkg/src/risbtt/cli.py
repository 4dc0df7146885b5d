"""
risbtt command line.

    risbtt point    [--config PATH]             one scenario, all three metrics (JSON on stdout)
    risbtt sweep    [--config PATH] [--out DIR] the [sweep] section of the config
    risbtt figs     [--config PATH] [--out DIR] the four figure presets
    risbtt validate [--config PATH] [--out DIR] analytic vs Monte Carlo report

Exit status: 0 on success, 2 for configuration or domain errors, 1 for any other
failure. Failures also print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .analytic import analyze
from .config import (
    ExperimentConfig,
    RuntimeConfig,
    apply_overrides,
    load_experiment_config,
    load_runtime_config,
)
from .errors import ConfigError, DomainError, RisBttError
from .experiments import (
    emit,
    run_figures,
    run_sweep,
    snr_sweep,
    validation_report,
    write_report,
)
from .logging import configure_logging, get_logger
from .metrics import METRICS
from .models import Metric, OutputFormat
from .montecarlo import simulate

log = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment TOML file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    common.add_argument("--seed", type=_u64, default=None, help="Monte Carlo seed")
    common.add_argument("--trials", type=_positive, default=None, help="trials per point")
    common.add_argument(
        "--independent-source",
        action="store_true",
        help="give the RIS term its own source fading amplitude",
    )
    common.add_argument("--workers", type=_positive, default=None, help="worker processes")
    common.add_argument("--quiet", action="store_true", help="log warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="risbtt", description="RIS-aided backscatter tag-to-tag link performance model"
    )
    verbs = parser.add_subparsers(dest="command", required=True)
    verbs.add_parser("point", parents=[common], help="OP, BER and AC of one scenario")
    verbs.add_parser("sweep", parents=[common], help="run the [sweep] section of the config")
    verbs.add_parser("figs", parents=[common], help="write the four figure datasets")
    verbs.add_parser("validate", parents=[common], help="analytic vs Monte Carlo report")
    return parser


def _load(args: argparse.Namespace, runtime: RuntimeConfig) -> ExperimentConfig:
    cfg = load_experiment_config(args.config, runtime)
    return apply_overrides(
        cfg,
        seed=args.seed,
        trials=args.trials,
        independent_source=args.independent_source,
        workers=args.workers,
    )


# ----- Verbs -----


def cmd_point(cfg: ExperimentConfig, args: argparse.Namespace) -> dict[str, Any]:
    result = analyze(cfg.params, cfg.analysis.quad, cfg.analysis.verify_meijer)
    record: dict[str, Any] = {
        "gamma0": result.gains.gamma0,
        "gbar_x": result.gains.gbar_x,
        "gbar_y": result.gains.gbar_y,
        "snr_mean": result.moments.mean,
        "snr_variance": result.moments.variance,
        "k": result.fit.k,
        "theta": result.fit.theta,
        "gamma_th": result.gamma_th,
        "op": result.op,
        "success_probability": result.success_probability,
        "ber": result.ber,
        "ac": result.ac,
    }
    if cfg.mc_enabled:
        run = simulate(cfg.params, cfg.mc)
        record["mc"] = {
            m.name.lower(): {
                "value": run.metrics.metric(m).value,
                "stderr": run.metrics.metric(m).std_error,
            }
            for m in Metric
        }
        record["mc"]["n_trials"] = cfg.mc.n_trials
        record["mc"]["seed"] = cfg.mc.seed
    print(json.dumps(record, indent=2))
    return record


def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> Path:
    spec = cfg.sweep or snr_sweep(cfg, (Metric.OP, Metric.BER, Metric.AC), "sweep")
    points = run_sweep(spec, cfg.analysis.quad, cfg.analysis.verify_meijer)
    fmt = OutputFormat[args.fmt.upper()]
    path = emit(points, fmt, args.out / f"{spec.name}.{args.fmt}")
    print(path)
    return path


def cmd_figs(cfg: ExperimentConfig, args: argparse.Namespace) -> list[Path]:
    paths = run_figures(cfg, args.out, OutputFormat[args.fmt.upper()])
    for path in paths:
        print(path)
    return paths


def cmd_validate(cfg: ExperimentConfig, args: argparse.Namespace) -> dict[str, Any]:
    report = validation_report(cfg, cfg.sweep)
    path = write_report(report, args.out / "validation.json")
    for mode, per_metric in report["modes"].items():
        for metric, gap in per_metric.items():
            print(
                f"{mode:<12} {metric:<4} max |gap| = {gap['max_abs_gap']:.4g}  "
                f"max gap/stderr = {gap['max_gap_stderr']:.3g}"
            )
    for metric, gap in report["shared_vs_independent"].items():
        print(f"{'shared-indep':<12} {metric:<4} max |gap| = {gap:.4g}")
    print(path)
    return report


_VERBS = {
    "point": cmd_point,
    "sweep": cmd_sweep,
    "figs": cmd_figs,
    "validate": cmd_validate,
}


def _error_record(exc: RisBttError) -> str:
    return json.dumps(
        {
            "error": type(exc).__name__,
            "message": str(exc),
            "field": getattr(exc, "field", None),
        }
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runtime = load_runtime_config()
        configure_logging("WARNING" if args.quiet else runtime.log_level)
        cfg = _load(args, runtime)
        log.info("command started", extra={"command": args.command, "config": str(args.config)})
        _VERBS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_INVALID
    except RisBttError as exc:
        log.error("command failed", extra={"command": args.command, "error": repr(exc)})
        print(_error_record(exc), file=sys.stderr)
        return EXIT_FAILURE
    finally:
        log.info("run metrics", extra={"metrics": METRICS.snapshot()})
    return EXIT_OK
