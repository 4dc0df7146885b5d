from __future__ import annotations

from unittest.mock import patch

import numpy as np
import pytest

from risbtt.config import RuntimeConfig
from risbtt.errors import SimulationError
from risbtt.metrics import METRICS
from risbtt.models import McConfig, SystemParams
from risbtt.montecarlo import BLOCK_SIZE, block_count, block_stats, simulate
from risbtt.supervisor import TrialSupervisor


@pytest.fixture()
def cfg() -> RuntimeConfig:
    return RuntimeConfig(num_workers=2, log_level="WARNING", ipc_timeout=60.0)


class TestSupervisorLifecycle:
    def test_start_and_stop(self, cfg: RuntimeConfig) -> None:
        sup = TrialSupervisor(config=cfg)
        sup.start()
        assert sup._started
        assert len(sup._workers) == cfg.num_workers
        assert all(p.is_alive() for p in sup._workers)
        assert METRICS.workers_active.value == cfg.num_workers
        sup.stop(timeout=5.0)
        assert not sup._started
        assert METRICS.workers_active.value == 0

    def test_double_start_raises(self, cfg: RuntimeConfig) -> None:
        sup = TrialSupervisor(config=cfg)
        sup.start()
        try:
            with pytest.raises(RuntimeError, match="already started"):
                sup.start()
        finally:
            sup.stop(timeout=5.0)

    def test_context_manager(self, cfg: RuntimeConfig) -> None:
        with TrialSupervisor(config=cfg) as sup:
            assert sup._started
        assert not sup._started

    def test_run_before_start_raises(self, cfg: RuntimeConfig) -> None:
        sup = TrialSupervisor(config=cfg)
        with pytest.raises(RuntimeError, match="not started"):
            sup.run_blocks(SystemParams(), McConfig(n_trials=10), 1)

    def test_rejects_zero_workers(self, cfg: RuntimeConfig) -> None:
        cfg.num_workers = 0
        with pytest.raises(ValueError, match="num_workers"):
            TrialSupervisor(config=cfg)

    def test_explicit_worker_count_wins(self, cfg: RuntimeConfig) -> None:
        assert TrialSupervisor(num_workers=3, config=cfg).num_workers == 3


class TestChunks:
    def test_chunks_cover_every_block_once(self, cfg: RuntimeConfig) -> None:
        sup = TrialSupervisor(config=cfg)
        for n_blocks in (1, 7, 25, 100):
            covered = [b for lo, hi in sup._chunks(n_blocks) for b in range(lo, hi)]
            assert covered == list(range(n_blocks))


class TestRunBlocks:
    def test_blocks_match_in_process(self, cfg: RuntimeConfig) -> None:
        params = SystemParams(n_elements=6)
        mc = McConfig(n_trials=5 * BLOCK_SIZE + 17, seed=3)
        n_blocks = block_count(mc.n_trials)
        with TrialSupervisor(config=cfg) as sup:
            pooled = sup.run_blocks(params, mc, n_blocks)
        assert [s.count for s in pooled] == [BLOCK_SIZE] * 5 + [17]
        for b, stats in enumerate(pooled):
            direct = block_stats(params, mc, b)
            np.testing.assert_array_equal(stats.mean, direct.mean)
            np.testing.assert_array_equal(stats.m2, direct.m2)

    def test_pool_serves_several_runs(self, cfg: RuntimeConfig) -> None:
        params = SystemParams(n_elements=2)
        with TrialSupervisor(config=cfg) as sup:
            first = simulate(params, McConfig(n_trials=2 * BLOCK_SIZE, seed=1), sup)
            second = simulate(params, McConfig(n_trials=2 * BLOCK_SIZE, seed=2), sup)
        assert first.metrics.ac.value != second.metrics.ac.value

    def test_pooled_trials_counted_in_parent(self, cfg: RuntimeConfig) -> None:
        mc = McConfig(n_trials=3 * BLOCK_SIZE + 5, seed=4)
        before = METRICS.trials_simulated.value
        with TrialSupervisor(config=cfg) as sup:
            sup.run_blocks(SystemParams(n_elements=2), mc, block_count(mc.n_trials))
        assert METRICS.trials_simulated.value - before == mc.n_trials

    def test_worker_error_raises_simulation_error(self, cfg: RuntimeConfig) -> None:
        mc = McConfig(n_trials=BLOCK_SIZE, seed=3)
        with TrialSupervisor(config=cfg) as sup:
            # two blocks requested for a one-block run
            with pytest.raises(SimulationError, match="past the last trial"):
                sup.run_blocks(SystemParams(), mc, 2)

    def test_pool_result_equals_in_process_result(self, cfg: RuntimeConfig) -> None:
        params = SystemParams(n_elements=10)
        serial = McConfig(n_trials=4 * BLOCK_SIZE + 1, seed=99)
        with TrialSupervisor(config=cfg) as sup:
            pooled = simulate(params, serial, sup)
        alone = simulate(params, serial)
        assert pooled == alone

    def test_ipc_timeout_raised(self, cfg: RuntimeConfig) -> None:
        from risbtt.errors import IPCError

        cfg.ipc_timeout = 0.2
        with TrialSupervisor(config=cfg) as sup:
            with patch("risbtt.supervisor.ipc.recv", side_effect=IPCError("recv failed")):
                with pytest.raises(IPCError, match="no worker result"):
                    sup.run_blocks(SystemParams(), McConfig(n_trials=10), 1)
