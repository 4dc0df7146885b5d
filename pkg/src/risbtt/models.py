from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError

FloatArray = NDArray[np.float64]

TWO_PI = 2.0 * math.pi


class SourceMode(Enum):
    SHARED = auto()  # one h_ST feeds both the direct and the RIS term
    INDEPENDENT = auto()  # RIS term gets its own copy of h_ST


class SnrForm(Enum):
    EXACT = auto()  # complex RIS sum with the draw's phases
    IDEALIZED = auto()  # co-phased amplitudes, coherent with the direct path
    POWER_SUM = auto()  # direct and RIS powers added, no cross term


class Metric(Enum):
    OP = auto()
    BER = auto()
    AC = auto()


class SweepAxis(Enum):
    SNR_DB = auto()
    N_ELEMENTS = auto()
    D_TL = auto()


class SnrReference(Enum):
    TRANSMIT = auto()  # axis value is the transmit SNR (minus the offset)
    MEAN = auto()  # axis value is E[gamma_L] in dB


class OutputFormat(Enum):
    CSV = auto()
    JSON = auto()


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DomainError(message)


@dataclass(frozen=True)
class SystemParams:
    """Every physical input of one link scenario.

    Powers are in dBm, distances in metres. alpha, beta, delta1 and delta2 are
    exponential means of the squared fading amplitudes.
    """

    p_s_dbm: float = 1.0
    noise_dbm: float = -50.0
    d_st: float = 1.0
    d_tl: float = 1.5
    d_tr: float = 1.0
    d_rl: float = 1.0
    chi: float = 3.5
    n_elements: int = 20
    alpha: float = 1.0
    beta: float = 1.0
    delta1: float = 1.0
    delta2: float = 1.0
    lambda_t: float = 1.0
    r_t: float = 2.0

    def __post_init__(self) -> None:
        _require(math.isfinite(self.p_s_dbm), "p_s_dbm must be finite")
        _require(math.isfinite(self.noise_dbm), "noise_dbm must be finite")
        for name in ("d_st", "d_tl", "d_tr", "d_rl"):
            value = getattr(self, name)
            _require(math.isfinite(value) and value > 0, f"{name} must be > 0, got {value}")
        _require(math.isfinite(self.chi) and self.chi > 0, f"chi must be > 0, got {self.chi}")
        _require(
            isinstance(self.n_elements, int) and not isinstance(self.n_elements, bool),
            "n_elements must be an integer",
        )
        _require(self.n_elements >= 0, f"n_elements must be >= 0, got {self.n_elements}")
        for name in ("alpha", "beta", "delta1", "delta2"):
            value = getattr(self, name)
            _require(math.isfinite(value) and value > 0, f"{name} must be > 0, got {value}")
        _require(
            0.0 < self.lambda_t <= 1.0, f"lambda_t must lie in (0, 1], got {self.lambda_t}"
        )
        _require(math.isfinite(self.r_t) and self.r_t > 0, f"r_t must be > 0, got {self.r_t}")

    @property
    def gamma_th(self) -> float:
        """SNR threshold 2^R_t - 1 matching the rate threshold."""
        return 2.0**self.r_t - 1.0


@dataclass(frozen=True)
class DerivedGains:
    gamma0: float
    gbar_x: float
    gbar_y: float

    def __post_init__(self) -> None:
        _require(self.gamma0 > 0 and math.isfinite(self.gamma0), "gamma0 must be > 0")
        _require(self.gbar_x >= 0 and self.gbar_y >= 0, "gain factors must be >= 0")


@dataclass(frozen=True)
class ChannelDraw:
    """Fading amplitudes and phases for one trial or a batch of trials.

    Scalar fields (h_st, h_tl, h_st_ris) carry the batch shape; per-element
    fields carry the batch shape plus a trailing axis of length N.
    h_st_ris is the source amplitude seen by the RIS term; in shared-source
    mode it is the same array as h_st.
    """

    h_st: FloatArray
    h_tl: FloatArray
    h_tr: FloatArray
    h_rl: FloatArray
    delta_ph: FloatArray
    zeta_ph: FloatArray
    phi_ph: FloatArray
    h_st_ris: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        shape = np.shape(self.h_tr)
        for name in ("h_rl", "delta_ph", "zeta_ph", "phi_ph"):
            _require(
                np.shape(getattr(self, name)) == shape,
                f"{name} shape {np.shape(getattr(self, name))} != h_tr shape {shape}",
            )
        for name in ("h_st", "h_tl", "h_tr", "h_rl"):
            _require(bool(np.all(np.asarray(getattr(self, name)) >= 0)), f"{name} must be >= 0")
        if self.h_st_ris is not None:
            _require(bool(np.all(np.asarray(self.h_st_ris) >= 0)), "h_st_ris must be >= 0")
        for name in ("delta_ph", "zeta_ph", "phi_ph"):
            ph = np.asarray(getattr(self, name))
            _require(bool(np.all((ph >= 0) & (ph < TWO_PI))), f"{name} must lie in [0, 2pi)")

    @property
    def n_elements(self) -> int:
        return int(np.shape(self.h_tr)[-1]) if np.ndim(self.h_tr) else 0

    @property
    def source_for_ris(self) -> FloatArray:
        return self.h_st if self.h_st_ris is None else self.h_st_ris

    @property
    def psi(self) -> FloatArray:
        """Residual phase phi_n - delta_n - zeta_n per element, wrapped to [-pi, pi)."""
        raw = np.asarray(self.phi_ph - self.delta_ph - self.zeta_ph, dtype=np.float64)
        return np.asarray(np.mod(raw + math.pi, TWO_PI) - math.pi, dtype=np.float64)


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        _require(self.mean >= 0 and math.isfinite(self.mean), f"mean must be >= 0, got {self.mean}")
        _require(
            self.variance >= 0 and math.isfinite(self.variance),
            f"variance must be >= 0, got {self.variance}",
        )


@dataclass(frozen=True)
class RisSumGamma:
    """Gamma model of the co-phased cascade sum Y."""

    k_prime: float
    theta_prime: float
    n_elements: int

    @property
    def mean(self) -> float:
        return self.k_prime * self.theta_prime

    @property
    def variance(self) -> float:
        return self.k_prime * self.theta_prime**2


@dataclass(frozen=True)
class GammaApprox:
    k: float
    theta: float

    def __post_init__(self) -> None:
        _require(self.k > 0 and math.isfinite(self.k), f"k must be > 0, got {self.k}")
        _require(
            self.theta > 0 and math.isfinite(self.theta), f"theta must be > 0, got {self.theta}"
        )

    @property
    def mean(self) -> float:
        return self.k * self.theta

    @property
    def variance(self) -> float:
        return self.k * self.theta**2


@dataclass(frozen=True)
class QuadSpec:
    """Tolerances for the adaptive quadrature and contour integrals."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_refinements: int = 30

    def __post_init__(self) -> None:
        _require(self.rel_tol > 0, f"rel_tol must be > 0, got {self.rel_tol}")
        _require(self.abs_tol >= 0, f"abs_tol must be >= 0, got {self.abs_tol}")
        _require(
            self.max_refinements >= 1, f"max_refinements must be >= 1, got {self.max_refinements}"
        )


@dataclass(frozen=True)
class AnalysisResult:
    """Everything one pass of the moment-matching pipeline produces."""

    gains: DerivedGains
    moments: MomentPair
    fit: GammaApprox
    gamma_th: float
    op: float
    ber: float
    ac: float

    @property
    def success_probability(self) -> float:
        return 1.0 - self.op

    def metric(self, which: Metric) -> float:
        return {Metric.OP: self.op, Metric.BER: self.ber, Metric.AC: self.ac}[which]


@dataclass(frozen=True)
class McConfig:
    n_trials: int = 100_000
    seed: int = 42
    source_mode: SourceMode = SourceMode.SHARED
    snr_form: SnrForm = SnrForm.EXACT
    workers: int = 1
    # Test hook: every fading amplitude forced to 1 and every phase to 0.
    unit_fading: bool = False

    def __post_init__(self) -> None:
        _require(self.n_trials >= 1, f"n_trials must be >= 1, got {self.n_trials}")
        _require(
            0 <= self.seed < 2**64, f"seed must be an unsigned 64-bit integer, got {self.seed}"
        )
        _require(self.workers >= 1, f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_trials: int


@dataclass(frozen=True)
class McMetrics:
    op: McEstimate
    ber: McEstimate
    ac: McEstimate

    def metric(self, which: Metric) -> McEstimate:
        return {Metric.OP: self.op, Metric.BER: self.ber, Metric.AC: self.ac}[which]


@dataclass(frozen=True)
class McRun:
    """One Monte Carlo run: the metric estimates plus the SNR sample moments."""

    metrics: McMetrics
    snr_mean: McEstimate
    snr_variance: float


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a grid on one axis, crossed with RIS-size overlays."""

    axis: SweepAxis
    grid: tuple[float, ...]
    overlays: tuple[int, ...] = (0, 10, 20, 30, 40)
    base: SystemParams = field(default_factory=SystemParams)
    mc: Optional[McConfig] = None
    metrics: tuple[Metric, ...] = (Metric.OP, Metric.BER, Metric.AC)
    snr_offset_db: float = 21.0
    snr_reference: SnrReference = SnrReference.TRANSMIT
    # Transmit SNR pinned for non-SNR axes; None keeps p_s_dbm/noise_dbm as given.
    fixed_snr_db: Optional[float] = None
    name: str = "sweep"

    def __post_init__(self) -> None:
        _require(len(self.grid) > 0, "grid must be nonempty")
        _require(
            all(b > a for a, b in zip(self.grid, self.grid[1:])),
            "grid must be strictly increasing",
        )
        _require(len(self.overlays) > 0, "overlays must be nonempty")
        _require(all(n >= 0 for n in self.overlays), "overlay N values must be >= 0")
        _require(len(self.metrics) > 0, "metrics must be nonempty")
        if self.axis is SweepAxis.N_ELEMENTS:
            _require(
                all(float(v).is_integer() and v >= 0 for v in self.grid),
                "n_elements grid values must be nonnegative integers",
            )
        if self.axis is SweepAxis.D_TL:
            _require(all(v > 0 for v in self.grid), "d_tl grid values must be > 0")


@dataclass(frozen=True)
class CurvePoint:
    axis_name: str
    axis_value: float
    overlay_label: str
    metric: Metric
    analytic: float
    mc_value: Optional[float] = None
    mc_stderr: Optional[float] = None
    n_trials: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        _require(
            math.isfinite(self.analytic), f"analytic value must be finite, got {self.analytic}"
        )
        _require(
            (self.mc_value is None) == (self.mc_stderr is None),
            "mc_value and mc_stderr must be given together",
        )
