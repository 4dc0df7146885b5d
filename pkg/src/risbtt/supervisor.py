from __future__ import annotations

import itertools
import time
from multiprocessing import Queue, get_context
from multiprocessing.process import BaseProcess
from typing import List, Optional

from . import ipc
from .config import RuntimeConfig, load_runtime_config
from .errors import IPCError, SimulationError
from .logging import get_logger
from .metrics import METRICS
from .models import McConfig, SystemParams
from .montecarlo import BlockStats

log = get_logger(__name__)


class TrialSupervisor:
    """Pool of worker processes evaluating Monte Carlo trial blocks.

    Lifecycle:
      1. start() spawns num_workers processes running worker_main.
      2. run_blocks(params, mc, n_blocks) splits the block range into chunks,
         sends one TRIAL_BLOCKS message per chunk and waits for every
         BLOCK_RESULT. Results come back in any order and are re-sorted by
         block index before they are returned.
      3. stop() sends shutdown to all workers and joins them.

    Workers use the "spawn" start method and share nothing with the
    supervisor; all traffic goes through two multiprocessing queues. A pool
    can serve any number of run_blocks calls (one per sweep point).
    """

    def __init__(
        self, num_workers: Optional[int] = None, config: Optional[RuntimeConfig] = None
    ) -> None:
        self._cfg = config or load_runtime_config()
        self._num_workers = num_workers or self._cfg.num_workers
        if self._num_workers < 1:
            raise ValueError("num_workers must be >= 1")

        self._ctx = get_context("spawn")
        self._task_queue: "Queue[ipc.Message]" = self._ctx.Queue()
        self._result_queue: "Queue[ipc.Message]" = self._ctx.Queue()
        self._workers: List[BaseProcess] = []
        self._started = False
        self._jobs = itertools.count()

    @property
    def num_workers(self) -> int:
        return self._num_workers

    # ------------------------------------------------------------------
    # Lifecycle
    # ------------------------------------------------------------------

    def start(self) -> None:
        """Spawn all worker processes."""
        if self._started:
            raise RuntimeError("TrialSupervisor already started")

        from .worker import worker_main

        for i in range(self._num_workers):
            p = self._ctx.Process(
                target=worker_main,
                args=(self._task_queue, self._result_queue, self._cfg.log_level),
                name=f"risbtt-worker-{i}",
                daemon=False,
            )
            p.start()
            self._workers.append(p)
            log.info("worker spawned", extra={"worker": p.name, "worker_pid": p.pid})

        self._started = True
        METRICS.workers_active.set(len(self._workers))
        log.info("supervisor started", extra={"num_workers": self._num_workers})

    def stop(self, timeout: float = 10.0) -> None:
        """Gracefully shut down all workers, then join their processes."""
        if not self._started:
            return

        shutdown_msg = ipc.Message(
            type=ipc.MessageType.CONTROL,
            payload={"action": "shutdown"},
        )
        for _ in self._workers:
            try:
                ipc.send(self._task_queue, shutdown_msg, timeout=2.0)
            except ipc.IPCError:
                pass

        deadline = time.time() + timeout
        for p in self._workers:
            remaining = max(0.0, deadline - time.time())
            p.join(timeout=remaining)
            if p.is_alive():
                log.warning("worker did not stop; terminating", extra={"worker_pid": p.pid})
                p.terminate()
                p.join(timeout=2.0)

        self._workers.clear()
        self._started = False
        METRICS.workers_active.set(0)
        log.info("supervisor stopped")

    # ------------------------------------------------------------------
    # Block dispatch & collection
    # ------------------------------------------------------------------

    def _chunks(self, n_blocks: int) -> list[tuple[int, int]]:
        # Several chunks per worker so a slow worker does not hold the tail.
        size = max(1, n_blocks // (4 * self._num_workers))
        return [(b, min(b + size, n_blocks)) for b in range(0, n_blocks, size)]

    def run_blocks(self, params: SystemParams, mc: McConfig, n_blocks: int) -> List[BlockStats]:
        """Evaluate blocks 0..n_blocks-1 on the pool.

        Returns:
            BlockStats in block-index order.

        Raises:
            RuntimeError: if the supervisor has not been started.
            SimulationError: if a worker reports a failed block.
            IPCError: if a result does not arrive within the configured timeout.
        """
        if not self._started:
            raise RuntimeError("TrialSupervisor not started; call start() first")
        job = next(self._jobs)
        chunks = self._chunks(n_blocks)
        for start, stop in chunks:
            msg = ipc.Message(
                type=ipc.MessageType.TRIAL_BLOCKS,
                payload={"job": job, "params": params, "mc": mc, "start": start, "stop": stop},
            )
            ipc.send(self._task_queue, msg, timeout=self._cfg.ipc_timeout)

        results: dict[int, BlockStats] = {}
        pending = len(chunks)
        while pending:
            try:
                msg = ipc.recv(self._result_queue, timeout=self._cfg.ipc_timeout)
            except IPCError as exc:
                raise IPCError(
                    f"no worker result within {self._cfg.ipc_timeout}s "
                    f"({pending} of {len(chunks)} chunks outstanding)"
                ) from exc
            if msg.type != ipc.MessageType.BLOCK_RESULT or msg.payload.get("job") != job:
                log.warning("stray message dropped", extra={"type": str(msg.type)})
                continue
            pending -= 1
            if "error" in msg.payload:
                raise SimulationError(
                    f"blocks {msg.payload['start']}..{msg.payload['stop'] - 1} failed: "
                    f"{msg.payload['error']}"
                )
            for offset, stats in enumerate(msg.payload["stats"]):
                results[msg.payload["start"] + offset] = stats
            # worker counters live in the worker processes
            METRICS.trials_simulated.inc(sum(s.count for s in msg.payload["stats"]))

        return [results[b] for b in range(n_blocks)]

    def __enter__(self) -> "TrialSupervisor":
        self.start()
        return self

    def __exit__(self, *_: object) -> None:
        self.stop()
