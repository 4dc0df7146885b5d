"""
risbtt: performance model of a RIS-aided backscatter tag-to-tag link.

Provides:
  - analytic: gamma moment matching of the received SNR; OP, BER and AC
  - montecarlo: block-deterministic channel simulator validating every metric
  - experiments: parameter sweeps, figure presets and CSV/JSON output
  - TrialSupervisor: multi-process pool for Monte Carlo trial blocks
  - config: environment runtime settings plus TOML experiment files
"""

from .analytic import analyze, average_capacity, bit_error_rate, outage_probability
from .config import ExperimentConfig, RuntimeConfig, load_experiment_config, load_runtime_config
from .errors import (
    ConfigError,
    ConsistencyError,
    DegenerateError,
    DomainError,
    NonConvergenceError,
    RisBttError,
)
from .models import AnalysisResult, GammaApprox, McConfig, SystemParams
from .montecarlo import estimate_metrics, simulate
from .supervisor import TrialSupervisor

__all__ = [
    "analyze",
    "outage_probability",
    "bit_error_rate",
    "average_capacity",
    "simulate",
    "estimate_metrics",
    "ExperimentConfig",
    "RuntimeConfig",
    "load_experiment_config",
    "load_runtime_config",
    "RisBttError",
    "DomainError",
    "DegenerateError",
    "NonConvergenceError",
    "ConsistencyError",
    "ConfigError",
    "AnalysisResult",
    "GammaApprox",
    "McConfig",
    "SystemParams",
    "TrialSupervisor",
]
