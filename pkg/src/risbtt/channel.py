from __future__ import annotations

import math
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray

from .models import (
    TWO_PI,
    ChannelDraw,
    DerivedGains,
    FloatArray,
    SnrForm,
    SourceMode,
    SystemParams,
)

SnrValue = Union[float, NDArray[np.float64]]


def dbm_to_mw(dbm: float) -> float:
    return float(10.0 ** (dbm / 10.0))


def derive_gains(params: SystemParams) -> DerivedGains:
    """Transmit SNR and the path-loss scaled gain factors of both paths.

    gamma0 = P_s / sigma_L^2 with both powers converted from dBm to mW;
    gbar_x = gamma0 / (d_ST d_TL)^chi and gbar_y = gamma0 / (d_ST d_TR d_RL)^chi.
    """
    gamma0 = dbm_to_mw(params.p_s_dbm) / dbm_to_mw(params.noise_dbm)
    chi = params.chi
    gbar_x = gamma0 / (params.d_st**chi * params.d_tl**chi)
    gbar_y = gamma0 / (params.d_st**chi * params.d_tr**chi * params.d_rl**chi)
    return DerivedGains(gamma0=gamma0, gbar_x=gbar_x, gbar_y=gbar_y)


def _rayleigh(rng: np.random.Generator, mean_power: float, size: object) -> FloatArray:
    # E[h^2] = 2 sigma^2 for numpy's Rayleigh scale sigma
    return np.asarray(rng.rayleigh(scale=math.sqrt(mean_power / 2.0), size=size), dtype=np.float64)


def sample_draw(
    params: SystemParams,
    rng: np.random.Generator,
    size: Optional[int] = None,
    source_mode: SourceMode = SourceMode.SHARED,
) -> ChannelDraw:
    """Draw fading amplitudes and phases with the RIS co-phased to the cascade.

    The stream is consumed in a fixed order whatever the source mode, so the
    same generator state yields the same h_ST, h_TL and RIS channels in both
    modes: h_ST, h_TL, the second source copy, h_TR, h_RL, delta, zeta.

    Args:
        params: Scenario; N and the four fading means are used.
        rng: Generator positioned at the start of this draw.
        size: Batch length; None gives a single trial (0-d scalar fields).
        source_mode: INDEPENDENT attaches the second source copy to the RIS term.
    """
    n = params.n_elements
    elem_shape: tuple[int, ...] = (n,) if size is None else (size, n)

    h_st = _rayleigh(rng, params.alpha, size)
    h_tl = _rayleigh(rng, params.beta, size)
    h_st_copy = _rayleigh(rng, params.alpha, size)
    h_tr = _rayleigh(rng, params.delta1, elem_shape)
    h_rl = _rayleigh(rng, params.delta2, elem_shape)
    delta_ph = np.asarray(rng.uniform(0.0, TWO_PI, size=elem_shape), dtype=np.float64)
    zeta_ph = np.asarray(rng.uniform(0.0, TWO_PI, size=elem_shape), dtype=np.float64)
    phi_ph = np.mod(delta_ph + zeta_ph, TWO_PI)
    phi_ph = np.where(phi_ph >= TWO_PI, 0.0, phi_ph)

    return ChannelDraw(
        h_st=h_st,
        h_tl=h_tl,
        h_tr=h_tr,
        h_rl=h_rl,
        delta_ph=delta_ph,
        zeta_ph=zeta_ph,
        phi_ph=phi_ph,
        h_st_ris=h_st_copy if source_mode is SourceMode.INDEPENDENT else None,
    )


def unit_draw(params: SystemParams, size: Optional[int] = None) -> ChannelDraw:
    """Deterministic draw with every amplitude 1 and every phase 0."""
    n = params.n_elements
    scalar_shape: tuple[int, ...] = () if size is None else (size,)
    elem_shape: tuple[int, ...] = (n,) if size is None else (size, n)
    ones = np.ones(scalar_shape)
    return ChannelDraw(
        h_st=ones,
        h_tl=ones.copy(),
        h_tr=np.ones(elem_shape),
        h_rl=np.ones(elem_shape),
        delta_ph=np.zeros(elem_shape),
        zeta_ph=np.zeros(elem_shape),
        phi_ph=np.zeros(elem_shape),
    )


def _as_result(values: NDArray[np.float64]) -> SnrValue:
    return float(values) if np.ndim(values) == 0 else values


def snr_exact(
    params: SystemParams, draw: ChannelDraw, gains: Optional[DerivedGains] = None
) -> SnrValue:
    """Instantaneous SNR with the complex RIS sum and the draw's own phases.

    gamma = lambda_T^2 |sqrt(gbar_x) h_ST h_TL + sqrt(gbar_y) h_ST' S|^2 with
    S = sum_n h_TR,n h_RL,n e^{j psi_n}, where h_ST' is h_ST in shared-source mode.
    """
    g = gains or derive_gains(params)
    cascade = draw.h_tr * draw.h_rl
    psi = draw.psi
    ris_re = np.sum(cascade * np.cos(psi), axis=-1)
    ris_im = np.sum(cascade * np.sin(psi), axis=-1)
    src = draw.source_for_ris
    real = math.sqrt(g.gbar_x) * draw.h_st * draw.h_tl + math.sqrt(g.gbar_y) * src * ris_re
    imag = math.sqrt(g.gbar_y) * src * ris_im
    return _as_result(params.lambda_t**2 * (real * real + imag * imag))


def snr_idealized(
    params: SystemParams, draw: ChannelDraw, gains: Optional[DerivedGains] = None
) -> SnrValue:
    """Co-phased SNR: every RIS path adds in phase with the direct path."""
    g = gains or derive_gains(params)
    ris = np.sum(draw.h_tr * draw.h_rl, axis=-1)
    real = (
        math.sqrt(g.gbar_x) * draw.h_st * draw.h_tl
        + math.sqrt(g.gbar_y) * draw.source_for_ris * ris
    )
    return _as_result(params.lambda_t**2 * (real * real))


def snr_power_sum(
    params: SystemParams, draw: ChannelDraw, gains: Optional[DerivedGains] = None
) -> SnrValue:
    """Direct and co-phased RIS powers added without the cross term."""
    g = gains or derive_gains(params)
    direct = draw.h_st * draw.h_tl
    ris = draw.source_for_ris * np.sum(draw.h_tr * draw.h_rl, axis=-1)
    return _as_result(params.lambda_t**2 * (g.gbar_x * direct * direct + g.gbar_y * ris * ris))


def snr(
    params: SystemParams,
    draw: ChannelDraw,
    form: SnrForm = SnrForm.EXACT,
    gains: Optional[DerivedGains] = None,
) -> SnrValue:
    if form is SnrForm.EXACT:
        return snr_exact(params, draw, gains)
    if form is SnrForm.IDEALIZED:
        return snr_idealized(params, draw, gains)
    return snr_power_sum(params, draw, gains)
