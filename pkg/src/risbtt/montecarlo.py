"""
Monte Carlo estimator of OP, BER and AC from simulated channel draws.

Trials are grouped in fixed blocks of BLOCK_SIZE. Block b draws from its own
Philox stream (key = seed, counter high word = b) and always generates a full
block before slicing, so the draws of trial i depend only on (seed, i). Each
block reduces to (count, mean, M2) per sample channel; blocks are merged in
a fixed pairwise tree over block index. The result is therefore identical for
any number of workers.

Sample channels per trial:
    op   1{gamma <= 2^R_t - 1}
    ber  Q(sqrt(2 gamma))          (semi-analytic, no bit decisions)
    ac   log2(1 + gamma)
    snr  gamma
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .channel import derive_gains, sample_draw, snr, unit_draw
from .errors import DomainError
from .logging import get_logger
from .metrics import METRICS
from .models import (
    ChannelDraw,
    GammaApprox,
    McConfig,
    McEstimate,
    McMetrics,
    McRun,
    MomentPair,
    SystemParams,
)
from .specfun import q_function

if TYPE_CHECKING:
    from .supervisor import TrialSupervisor

log = get_logger(__name__)

BLOCK_SIZE = 4096
_LN2 = math.log(2.0)
# Row order of the per-block statistics.
CHANNELS = ("op", "ber", "ac", "snr")


@dataclass(frozen=True)
class BlockStats:
    """Count, per-channel mean and per-channel sum of squared deviations."""

    count: int
    mean: NDArray[np.float64]
    m2: NDArray[np.float64]


def block_count(n_trials: int) -> int:
    return -(-n_trials // BLOCK_SIZE)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream of one block: disjoint from every other block's."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block]))


def _trials_in_block(n_trials: int, block: int) -> int:
    return min(BLOCK_SIZE, n_trials - block * BLOCK_SIZE)


def _head(draw: ChannelDraw, count: int) -> ChannelDraw:
    if count == BLOCK_SIZE:
        return draw
    return ChannelDraw(
        h_st=draw.h_st[:count],
        h_tl=draw.h_tl[:count],
        h_tr=draw.h_tr[:count],
        h_rl=draw.h_rl[:count],
        delta_ph=draw.delta_ph[:count],
        zeta_ph=draw.zeta_ph[:count],
        phi_ph=draw.phi_ph[:count],
        h_st_ris=None if draw.h_st_ris is None else draw.h_st_ris[:count],
    )


def stats_from_snr(gamma: NDArray[np.float64], gamma_th: float) -> BlockStats:
    """Reduce a vector of SNR samples to per-channel block statistics."""
    samples = np.vstack(
        [
            (gamma <= gamma_th).astype(np.float64),
            np.asarray(q_function(np.sqrt(2.0 * gamma)), dtype=np.float64),
            np.log1p(gamma) / _LN2,
            gamma,
        ]
    )
    mean = samples.mean(axis=1)
    m2 = ((samples - mean[:, None]) ** 2).sum(axis=1)
    return BlockStats(count=int(gamma.size), mean=mean, m2=m2)


def block_stats(params: SystemParams, cfg: McConfig, block: int) -> BlockStats:
    """Simulate one block of trials and reduce it."""
    count = _trials_in_block(cfg.n_trials, block)
    if count <= 0:
        raise DomainError(f"block {block} is past the last trial")
    if cfg.unit_fading:
        draw = unit_draw(params, count)
    else:
        full = sample_draw(params, block_rng(cfg.seed, block), BLOCK_SIZE, cfg.source_mode)
        draw = _head(full, count)
    gamma = np.asarray(snr(params, draw, cfg.snr_form, derive_gains(params)), dtype=np.float64)
    METRICS.trials_simulated.inc(count)
    return stats_from_snr(gamma, params.gamma_th)


def merge_stats(a: BlockStats, b: BlockStats) -> BlockStats:
    """Combine two partial reductions (pairwise mean / M2 update)."""
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return BlockStats(count=n, mean=mean, m2=m2)


def reduce_stats(stats: Sequence[BlockStats]) -> BlockStats:
    """Fixed pairwise tree over the given (block-ordered) sequence."""
    if not stats:
        raise DomainError("nothing to reduce")
    level = list(stats)
    while len(level) > 1:
        paired = [merge_stats(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            paired.append(level[-1])
        level = paired
    return level[0]


def _estimate(stats: BlockStats, row: int) -> McEstimate:
    n = stats.count
    value = float(stats.mean[row])
    if n < 2:
        return McEstimate(value=value, std_error=0.0, n_trials=n)
    std = math.sqrt(max(0.0, float(stats.m2[row])) / (n - 1))
    return McEstimate(value=value, std_error=std / math.sqrt(n), n_trials=n)


def _to_run(stats: BlockStats) -> McRun:
    metrics = McMetrics(op=_estimate(stats, 0), ber=_estimate(stats, 1), ac=_estimate(stats, 2))
    variance = float(stats.m2[3]) / (stats.count - 1) if stats.count > 1 else 0.0
    return McRun(metrics=metrics, snr_mean=_estimate(stats, 3), snr_variance=max(0.0, variance))


def _collect(
    params: SystemParams, cfg: McConfig, supervisor: Optional[TrialSupervisor]
) -> list[BlockStats]:
    n_blocks = block_count(cfg.n_trials)
    if supervisor is not None:
        return supervisor.run_blocks(params, cfg, n_blocks)
    if cfg.workers > 1 and n_blocks > 1:
        from .supervisor import TrialSupervisor

        with TrialSupervisor(num_workers=min(cfg.workers, n_blocks)) as pool:
            return pool.run_blocks(params, cfg, n_blocks)
    return [block_stats(params, cfg, b) for b in range(n_blocks)]


def simulate(
    params: SystemParams, cfg: McConfig, supervisor: Optional[TrialSupervisor] = None
) -> McRun:
    """Run cfg.n_trials channel trials and return every estimate.

    Args:
        params: Scenario to simulate.
        cfg: Trial count, seed, source mode and SNR form.
        supervisor: Running worker pool to reuse; None picks in-process or a
            temporary pool according to cfg.workers.
    """
    stats = _collect(params, cfg, supervisor)
    METRICS.blocks_completed.inc(len(stats))
    run = _to_run(reduce_stats(stats))
    log.debug(
        "monte carlo run",
        extra={
            "n_trials": cfg.n_trials,
            "seed": cfg.seed,
            "source_mode": cfg.source_mode.name.lower(),
            "snr_form": cfg.snr_form.name.lower(),
            "op": run.metrics.op.value,
            "ber": run.metrics.ber.value,
            "ac": run.metrics.ac.value,
        },
    )
    return run


def estimate_metrics(
    params: SystemParams, cfg: McConfig, supervisor: Optional[TrialSupervisor] = None
) -> McMetrics:
    """OP, BER and AC estimates with standard errors."""
    return simulate(params, cfg, supervisor).metrics


def empirical_snr_moments(
    params: SystemParams, cfg: McConfig, supervisor: Optional[TrialSupervisor] = None
) -> MomentPair:
    """Sample mean and (unbiased) sample variance of the simulated SNR."""
    run = simulate(params, cfg, supervisor)
    return MomentPair(mean=run.snr_mean.value, variance=run.snr_variance)


def estimate_metrics_from_gamma(
    fit: GammaApprox, gamma_th: float, n_trials: int, seed: int
) -> McMetrics:
    """Estimators fed with SNR samples drawn straight from a gamma law.

    Bypasses the channel so the estimators can be checked against the
    analytic metrics of the same gamma without any modelling gap.
    """
    stats = []
    for b in range(block_count(n_trials)):
        count = _trials_in_block(n_trials, b)
        full = block_rng(seed, b).gamma(shape=fit.k, scale=fit.theta, size=BLOCK_SIZE)
        gamma = np.asarray(full[:count], dtype=np.float64)
        stats.append(stats_from_snr(gamma, gamma_th))
    return _to_run(reduce_stats(stats)).metrics
