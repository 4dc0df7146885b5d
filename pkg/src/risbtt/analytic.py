"""
Moment-matching model of the received SNR and the three link metrics.

Pipeline (all closed form except the last step):

    direct link     gamma_x = gbar_x h_ST^2 h_TL^2          -> MomentPair
    RIS cascade     sum_n h_TR,n h_RL,n ~ Gamma(k', theta')  -> MomentPair
    total           direct + RIS, treated as independent    -> MomentPair
    backscatter     scaled by lambda_T^2
    fit             Gamma(k, theta) with k = E^2/V, theta = V/E
    metrics         OP from the gamma CDF; BER and AC as expectations under the fit

BER and AC are evaluated by quadrature over the fitted density. The Meijer-G
forms in specfun give an independent second evaluation, enabled with verify=True.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .channel import derive_gains
from .errors import ConsistencyError, DegenerateError, DomainError
from .logging import get_logger
from .models import (
    AnalysisResult,
    DerivedGains,
    GammaApprox,
    MomentPair,
    QuadSpec,
    RisSumGamma,
    SystemParams,
)
from .specfun import (
    expect_under_gamma,
    ln_gamma,
    meijer_g_ac,
    meijer_g_ber,
    q_function,
    reg_lower_inc_gamma,
)

log = get_logger(__name__)

PI_SQ = math.pi**2
# Relative disagreement tolerated between the quadrature and Meijer-G evaluations.
VERIFY_RTOL = 1e-8
_LN2 = math.log(2.0)


# ----- Moments -----


def product_moments(a: MomentPair, b: MomentPair) -> MomentPair:
    """Mean and variance of X1 X2 for independent X1, X2."""
    mean = a.mean * b.mean
    variance = a.variance * b.variance + a.variance * b.mean**2 + b.variance * a.mean**2
    return MomentPair(mean=mean, variance=variance)


def direct_link_moments(params: SystemParams, gains: DerivedGains) -> MomentPair:
    """gamma_x = gbar_x h_ST^2 h_TL^2: mean gbar_x alpha beta, variance 3 (gbar_x alpha beta)^2."""
    scale = gains.gbar_x * params.alpha * params.beta
    return MomentPair(mean=scale, variance=3.0 * scale**2)


def _require_ris(params: SystemParams) -> None:
    if params.n_elements < 1:
        raise DegenerateError("the RIS term needs n_elements >= 1")


def ris_sum_mean(params: SystemParams, gains: DerivedGains) -> float:
    _require_ris(params)
    n = params.n_elements
    return n * math.pi * math.sqrt(gains.gbar_y * params.delta1 * params.delta2) / 4.0


def ris_sum_variance(params: SystemParams, gains: DerivedGains) -> float:
    _require_ris(params)
    n = params.n_elements
    return n * gains.gbar_y * params.delta1 * params.delta2 * (16.0 - PI_SQ) / 16.0


def ris_sum_gamma(params: SystemParams, gains: DerivedGains) -> RisSumGamma:
    """Gamma model of the RIS cascade sum.

    k' = N pi^2 / (16 - pi^2), theta' = (16 - pi^2) sqrt(gbar_y delta1 delta2) / (4 pi).

    Raises:
        DegenerateError: if N = 0.
    """
    _require_ris(params)
    n = params.n_elements
    k_prime = n * PI_SQ / (16.0 - PI_SQ)
    theta_prime = (
        (16.0 - PI_SQ) * math.sqrt(gains.gbar_y * params.delta1 * params.delta2) / (4.0 * math.pi)
    )
    return RisSumGamma(k_prime=k_prime, theta_prime=theta_prime, n_elements=n)


def ris_sum_pdf(y: float, model: RisSumGamma) -> float:
    """Density of Y as stated for the cascade model.

    f_Y(y) = y^((N k' - 2)/2) exp(-sqrt(y)/theta') / (2 theta'^(N k') Gamma(N k')),
    evaluated in log space. This is the density of Z^2 with Z ~ Gamma(N k', theta').
    """
    if y < 0:
        raise DomainError(f"y must be >= 0, got {y}")
    a = model.n_elements * model.k_prime
    if y == 0:
        if a == 2.0:
            return 0.5 / model.theta_prime**2
        return math.inf if a < 2.0 else 0.0
    log_f = (
        0.5 * (a - 2.0) * math.log(y)
        - math.sqrt(y) / model.theta_prime
        - math.log(2.0)
        - a * math.log(model.theta_prime)
        - ln_gamma(a)
    )
    return math.exp(log_f)


def ris_sum_cdf(y: float, model: RisSumGamma) -> float:
    """CDF matching ris_sum_pdf: P(N k', sqrt(y)/theta')."""
    if y < 0:
        raise DomainError(f"y must be >= 0, got {y}")
    if math.isinf(y):
        return 1.0
    return reg_lower_inc_gamma(model.n_elements * model.k_prime, math.sqrt(y) / model.theta_prime)


def ris_link_moments(params: SystemParams, gains: DerivedGains) -> MomentPair:
    """RIS-path SNR moments.

    mean alpha N pi sqrt(gbar_y delta1 delta2) / 4,
    variance alpha^2 N gbar_y delta1 delta2 (2 + (N - 2) pi^2 / 16).
    """
    _require_ris(params)
    n = params.n_elements
    g = gains.gbar_y * params.delta1 * params.delta2
    mean = params.alpha * n * math.pi * math.sqrt(g) / 4.0
    variance = params.alpha**2 * n * g * (2.0 + (n - 2) * PI_SQ / 16.0)
    return MomentPair(mean=mean, variance=variance)


def total_snr_moments(params: SystemParams, gains: DerivedGains) -> MomentPair:
    """Moments of gamma_x + gamma_y, the two paths taken as independent.

    With N = 0 the RIS term is dropped and the direct-link moments come back.
    """
    direct = direct_link_moments(params, gains)
    if params.n_elements == 0:
        return direct
    ris = ris_link_moments(params, gains)
    return MomentPair(mean=direct.mean + ris.mean, variance=direct.variance + ris.variance)


def received_snr_moments(
    params: SystemParams, gains: Optional[DerivedGains] = None
) -> MomentPair:
    """Total SNR moments scaled by the backscattering power lambda_T^2."""
    m = total_snr_moments(params, gains or derive_gains(params))
    lam2 = params.lambda_t**2
    return MomentPair(mean=lam2 * m.mean, variance=lam2**2 * m.variance)


# ----- Gamma fit -----


def fit_gamma(m: MomentPair) -> GammaApprox:
    """Moment-matched gamma: k = mean^2 / variance, theta = variance / mean.

    Raises:
        DegenerateError: for a zero mean or zero variance.
    """
    if m.mean <= 0 or m.variance <= 0:
        raise DegenerateError(f"cannot fit a gamma to mean={m.mean}, variance={m.variance}")
    return GammaApprox(k=m.mean**2 / m.variance, theta=m.variance / m.mean)


def fit_gamma_closed_form(params: SystemParams, gains: DerivedGains) -> GammaApprox:
    """Shape and scale written out directly in the model parameters.

        k     = (4 gbar_x beta + N pi sqrt(gbar_y d1 d2))^2 / (16 S)
        theta = 4 alpha lambda_T^2 S / (4 gbar_x beta + N pi sqrt(gbar_y d1 d2))
        S     = 3 gbar_x^2 beta^2 + N gbar_y d1 d2 (2 + (N - 2) pi^2 / 16)

    Independent of the moment pipeline; fit_for must agree with it.
    """
    n = params.n_elements
    gx, beta = gains.gbar_x, params.beta
    gy = gains.gbar_y * params.delta1 * params.delta2
    amplitude = 4.0 * gx * beta + n * math.pi * math.sqrt(gy)
    spread = 3.0 * gx**2 * beta**2 + n * gy * (2.0 + (n - 2) * PI_SQ / 16.0)
    k = amplitude**2 / (16.0 * spread)
    theta = 4.0 * params.alpha * params.lambda_t**2 * spread / amplitude
    return GammaApprox(k=k, theta=theta)


def snr_pdf(g: float, fit: GammaApprox) -> float:
    """Fitted gamma density of the received SNR."""
    if g < 0:
        raise DomainError(f"SNR must be >= 0, got {g}")
    k, theta = fit.k, fit.theta
    if g == 0:
        return math.inf if k < 1.0 else (1.0 / theta if k == 1.0 else 0.0)
    return math.exp((k - 1.0) * math.log(g) - g / theta - ln_gamma(k) - k * math.log(theta))


def snr_cdf(g: float, fit: GammaApprox) -> float:
    """Fitted gamma CDF of the received SNR."""
    if g < 0:
        raise DomainError(f"SNR must be >= 0, got {g}")
    if math.isinf(g):
        return 1.0
    return reg_lower_inc_gamma(fit.k, g / fit.theta)


# ----- Metrics -----


def _ber_integrand(g: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.asarray(q_function(np.sqrt(2.0 * g)), dtype=np.float64)


def _ac_integrand(g: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.asarray(np.log1p(g) / _LN2, dtype=np.float64)


def ber_under_fit(fit: GammaApprox, spec: Optional[QuadSpec] = None) -> float:
    """Average of Q(sqrt(2 gamma)) under the fitted density."""
    return expect_under_gamma(_ber_integrand, fit.k, fit.theta, spec, points=(1.0,))


def ac_under_fit(fit: GammaApprox, spec: Optional[QuadSpec] = None) -> float:
    """Average of log2(1 + gamma) under the fitted density, in bit/s/Hz."""
    return expect_under_gamma(_ac_integrand, fit.k, fit.theta, spec, points=(1.0,))


def _check_agreement(name: str, quad: float, meijer: float, fit: GammaApprox) -> None:
    gap = abs(quad - meijer) / max(abs(quad), abs(meijer), 1e-300)
    log.debug(
        "meijer-g check",
        extra={
            "metric": name,
            "k": fit.k,
            "theta": fit.theta,
            "quadrature": quad,
            "meijer": meijer,
            "rel_gap": gap,
        },
    )
    if gap > VERIFY_RTOL:
        raise ConsistencyError(
            f"{name}: quadrature {quad!r} and Meijer-G {meijer!r} differ by {gap:.3g} "
            f"(k={fit.k:.6g}, theta={fit.theta:.6g})"
        )


def fit_for(params: SystemParams) -> GammaApprox:
    return fit_gamma(received_snr_moments(params))


def outage_probability(params: SystemParams) -> float:
    """P(C <= R_t) under the fitted gamma: P(k, (2^R_t - 1)/theta)."""
    return snr_cdf(params.gamma_th, fit_for(params))


def success_probability(params: SystemParams) -> float:
    """Complement of the outage probability."""
    return 1.0 - outage_probability(params)


def bit_error_rate(
    params: SystemParams, spec: Optional[QuadSpec] = None, verify: bool = False
) -> float:
    """Average of Q(sqrt(2 gamma_L)) under the fitted gamma.

    Raises:
        NonConvergenceError: propagated from the quadrature.
        ConsistencyError: with verify=True, if the Meijer-G form disagrees.
    """
    fit = fit_for(params)
    value = ber_under_fit(fit, spec)
    if verify:
        _check_agreement("ber", value, meijer_g_ber(fit.k, fit.theta, spec), fit)
    return value


def average_capacity(
    params: SystemParams, spec: Optional[QuadSpec] = None, verify: bool = False
) -> float:
    """Average of log2(1 + gamma_L) under the fitted gamma, in bit/s/Hz.

    Raises:
        NonConvergenceError: propagated from the quadrature.
        ConsistencyError: with verify=True, if the Meijer-G form disagrees.
    """
    fit = fit_for(params)
    value = ac_under_fit(fit, spec)
    if verify:
        _check_agreement("ac", value, meijer_g_ac(fit.k, fit.theta, spec), fit)
    return value


def analyze(
    params: SystemParams, spec: Optional[QuadSpec] = None, verify: bool = False
) -> AnalysisResult:
    """Run the pipeline once and return moments, fit and all three metrics."""
    gains = derive_gains(params)
    moments = received_snr_moments(params, gains)
    fit = fit_gamma(moments)
    op = snr_cdf(params.gamma_th, fit)
    ber = ber_under_fit(fit, spec)
    ac = ac_under_fit(fit, spec)
    if verify:
        _check_agreement("ber", ber, meijer_g_ber(fit.k, fit.theta, spec), fit)
        _check_agreement("ac", ac, meijer_g_ac(fit.k, fit.theta, spec), fit)
    return AnalysisResult(
        gains=gains, moments=moments, fit=fit, gamma_th=params.gamma_th, op=op, ber=ber, ac=ac
    )


def transmit_snr_for_mean(params: SystemParams, target_mean: float) -> float:
    """Linear gamma0 that makes the model's E[gamma_L] equal target_mean.

    E[gamma_L] = A gamma0 + B sqrt(gamma0) with A, B fixed by geometry and
    fading means, so sqrt(gamma0) is the positive root of A u^2 + B u - target.
    """
    if not target_mean > 0:
        raise DomainError(f"target mean SNR must be > 0, got {target_mean}")
    chi = params.chi
    lam2 = params.lambda_t**2
    a = lam2 * params.alpha * params.beta / (params.d_st * params.d_tl) ** chi
    b = 0.0
    if params.n_elements > 0:
        ris_loss = (params.d_st * params.d_tr * params.d_rl) ** chi
        root = math.sqrt(params.delta1 * params.delta2 / ris_loss)
        b = lam2 * params.alpha * params.n_elements * math.pi * root / 4.0
    u = 2.0 * target_mean / (b + math.sqrt(b * b + 4.0 * a * target_mean))
    return u * u
