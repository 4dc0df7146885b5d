from __future__ import annotations

import math

import numpy as np
import pytest

from risbtt.analytic import analyze, fit_gamma, received_snr_moments
from risbtt.channel import derive_gains, sample_draw, snr
from risbtt.errors import DomainError
from risbtt.metrics import METRICS
from risbtt.models import GammaApprox, McConfig, SnrForm, SourceMode, SystemParams
from risbtt.montecarlo import (
    BLOCK_SIZE,
    BlockStats,
    block_count,
    block_rng,
    block_stats,
    empirical_snr_moments,
    estimate_metrics,
    estimate_metrics_from_gamma,
    merge_stats,
    reduce_stats,
    simulate,
    stats_from_snr,
)


class TestBlocks:
    def test_block_count(self) -> None:
        assert block_count(1) == 1
        assert block_count(BLOCK_SIZE) == 1
        assert block_count(BLOCK_SIZE + 1) == 2

    def test_trial_draws_do_not_depend_on_run_length(self) -> None:
        params = SystemParams(n_elements=3)
        short = block_stats(params, McConfig(n_trials=BLOCK_SIZE + 10, seed=5), 0)
        long = block_stats(params, McConfig(n_trials=10 * BLOCK_SIZE, seed=5), 0)
        np.testing.assert_array_equal(short.mean, long.mean)

    def test_partial_last_block(self) -> None:
        stats = block_stats(SystemParams(), McConfig(n_trials=BLOCK_SIZE + 10, seed=5), 1)
        assert stats.count == 10

    def test_block_past_end_rejected(self) -> None:
        with pytest.raises(DomainError, match="past the last trial"):
            block_stats(SystemParams(), McConfig(n_trials=10), 1)

    def test_counts_trials(self) -> None:
        before = METRICS.trials_simulated.value
        block_stats(SystemParams(), McConfig(n_trials=100), 0)
        assert METRICS.trials_simulated.value - before == 100


class TestReduction:
    def test_merge_equals_pooled_statistics(self) -> None:
        rng = np.random.default_rng(0)
        a, b = rng.exponential(size=300), rng.exponential(size=700)
        merged = merge_stats(stats_from_snr(a, 1.0), stats_from_snr(b, 1.0))
        pooled = stats_from_snr(np.concatenate([a, b]), 1.0)
        assert merged.count == 1000
        np.testing.assert_allclose(merged.mean, pooled.mean, rtol=1e-12)
        np.testing.assert_allclose(merged.m2, pooled.m2, rtol=1e-10)

    def test_reduce_odd_count(self) -> None:
        parts = [
            BlockStats(count=1, mean=np.full(4, float(i)), m2=np.zeros(4)) for i in range(5)
        ]
        total = reduce_stats(parts)
        assert total.count == 5
        np.testing.assert_allclose(total.mean, 2.0)
        np.testing.assert_allclose(total.m2, 10.0)

    def test_reduce_empty_rejected(self) -> None:
        with pytest.raises(DomainError, match="nothing to reduce"):
            reduce_stats([])

    def test_sample_channels(self) -> None:
        stats = stats_from_snr(np.array([0.0, 3.0, 7.0]), 3.0)
        assert stats.mean[0] == pytest.approx(2.0 / 3.0)
        assert stats.mean[2] == pytest.approx((0.0 + 2.0 + 3.0) / 3.0)
        assert stats.mean[3] == pytest.approx(10.0 / 3.0)


class TestSimulate:
    def test_unit_fading_is_deterministic(self) -> None:
        p = SystemParams(n_elements=4)
        g = derive_gains(p)
        gamma = (math.sqrt(g.gbar_x) + 4.0 * math.sqrt(g.gbar_y)) ** 2
        run = simulate(p, McConfig(n_trials=50, unit_fading=True))
        assert run.metrics.op.value == 0.0
        assert run.metrics.op.std_error == 0.0
        assert run.metrics.ac.value == pytest.approx(math.log2(1.0 + gamma), rel=1e-12)
        assert run.snr_mean.value == pytest.approx(gamma, rel=1e-12)

    def test_same_seed_same_result(self) -> None:
        cfg = McConfig(n_trials=3 * BLOCK_SIZE + 5, seed=42)
        assert simulate(SystemParams(), cfg) == simulate(SystemParams(), cfg)

    def test_different_seeds_differ(self) -> None:
        a = simulate(SystemParams(), McConfig(n_trials=2000, seed=1))
        b = simulate(SystemParams(), McConfig(n_trials=2000, seed=2))
        assert a.metrics.ac.value != b.metrics.ac.value

    def test_single_trial_has_zero_stderr(self) -> None:
        est = estimate_metrics(SystemParams(), McConfig(n_trials=1))
        assert est.ber.std_error == 0.0
        assert est.ber.n_trials == 1

    def test_counts_blocks(self) -> None:
        before = METRICS.blocks_completed.value
        simulate(SystemParams(n_elements=1), McConfig(n_trials=2 * BLOCK_SIZE + 1))
        assert METRICS.blocks_completed.value - before == 3

    def test_snr_forms_ordered(self) -> None:
        p = SystemParams(n_elements=10)
        cfg = McConfig(n_trials=20_000, seed=8)
        exact = simulate(p, cfg).snr_mean.value
        ideal = simulate(p, McConfig(n_trials=20_000, seed=8, snr_form=SnrForm.IDEALIZED))
        power = simulate(p, McConfig(n_trials=20_000, seed=8, snr_form=SnrForm.POWER_SUM))
        assert exact == pytest.approx(ideal.snr_mean.value, rel=1e-12)
        assert power.snr_mean.value < ideal.snr_mean.value

    def test_hundredfold_transmit_snr_scales_each_trial(self) -> None:
        p = SystemParams(n_elements=12)
        louder = SystemParams(n_elements=12, noise_dbm=p.noise_dbm - 20.0)
        draw = sample_draw(p, block_rng(17, 0), BLOCK_SIZE)
        np.testing.assert_allclose(
            np.asarray(snr(louder, draw)), 100.0 * np.asarray(snr(p, draw)), rtol=1e-12
        )
        cfg = McConfig(n_trials=2 * BLOCK_SIZE, seed=17)
        base, loud = simulate(p, cfg), simulate(louder, cfg)
        assert loud.snr_mean.value == pytest.approx(100.0 * base.snr_mean.value, rel=1e-12)
        assert loud.metrics.op.value <= base.metrics.op.value

    def test_standard_error_follows_root_n(self) -> None:
        p = SystemParams(n_elements=10)
        errors = [
            simulate(p, McConfig(n_trials=n, seed=21)).metrics.ac.std_error
            for n in (50_000, 100_000, 200_000)
        ]
        assert errors[1] / errors[0] == pytest.approx(1.0 / math.sqrt(2.0), rel=0.05)
        assert errors[2] / errors[0] == pytest.approx(0.5, rel=0.05)

    def test_source_mode_irrelevant_without_ris(self) -> None:
        p = SystemParams(n_elements=0)
        shared = simulate(p, McConfig(n_trials=5000, seed=3))
        indep = simulate(p, McConfig(n_trials=5000, seed=3, source_mode=SourceMode.INDEPENDENT))
        assert shared == indep

    def test_source_mode_changes_ris_estimates(self) -> None:
        p = SystemParams(n_elements=20)
        shared = simulate(p, McConfig(n_trials=5000, seed=3))
        indep = simulate(p, McConfig(n_trials=5000, seed=3, source_mode=SourceMode.INDEPENDENT))
        assert shared.snr_mean.value != indep.snr_mean.value

    def test_no_ris_matches_gamma_fit_mean(self) -> None:
        p = SystemParams(n_elements=0)
        emp = empirical_snr_moments(p, McConfig(n_trials=200_000, seed=9))
        model = received_snr_moments(p)
        assert emp.mean == pytest.approx(model.mean, rel=0.02)
        assert emp.variance == pytest.approx(model.variance, rel=0.15)


class TestEstimatorsOnGammaSamples:
    def test_single_case(self) -> None:
        fit = GammaApprox(k=1.5, theta=4.0)
        est = estimate_metrics_from_gamma(fit, 3.0, 200_000, seed=1)
        from risbtt.analytic import ac_under_fit, ber_under_fit
        from risbtt.specfun import reg_lower_inc_gamma

        assert abs(est.op.value - reg_lower_inc_gamma(1.5, 0.75)) < 4 * est.op.std_error
        assert abs(est.ber.value - ber_under_fit(fit)) < 4 * est.ber.std_error
        assert abs(est.ac.value - ac_under_fit(fit)) < 4 * est.ac.std_error

    @pytest.mark.slow
    def test_random_scenarios_within_four_standard_errors(self) -> None:
        rng = np.random.default_rng(77)
        for i in range(10):
            p = SystemParams(
                n_elements=int(rng.integers(0, 41)),
                noise_dbm=float(rng.uniform(-60.0, -10.0)),
                d_tl=float(rng.uniform(1.0, 4.0)),
            )
            result = analyze(p)
            fit = fit_gamma(received_snr_moments(p))
            est = estimate_metrics_from_gamma(fit, p.gamma_th, 1_000_000, seed=1000 + i)
            for name in ("op", "ber", "ac"):
                e = getattr(est, name)
                assert abs(e.value - getattr(result, name)) <= 4 * e.std_error + 1e-12, (name, p)
