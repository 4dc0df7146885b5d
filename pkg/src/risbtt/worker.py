from __future__ import annotations

from multiprocessing import Queue

from . import ipc
from .logging import configure_logging, get_logger
from .montecarlo import block_stats

log = get_logger(__name__)


def handle_trial_blocks(payload: dict) -> ipc.Message:
    """Evaluate the block range of one TRIAL_BLOCKS payload.

    Payload keys: job, params (SystemParams), mc (McConfig), start, stop.
    Returns a BLOCK_RESULT carrying the per-block statistics in block order,
    or an "error" string if the evaluation raised.
    """
    job = payload.get("job")
    start, stop = payload["start"], payload["stop"]
    try:
        stats = [block_stats(payload["params"], payload["mc"], b) for b in range(start, stop)]
    except Exception as exc:  # reported to the supervisor, which raises SimulationError
        log.exception("trial block failed", extra={"job": job, "start": start, "stop": stop})
        return ipc.Message(
            type=ipc.MessageType.BLOCK_RESULT,
            payload={"job": job, "start": start, "stop": stop, "error": repr(exc)},
        )
    return ipc.Message(
        type=ipc.MessageType.BLOCK_RESULT,
        payload={"job": job, "start": start, "stop": stop, "stats": stats},
    )


def worker_main(
    task_queue: "Queue[ipc.Message]",
    result_queue: "Queue[ipc.Message]",
    log_level: str = "INFO",
) -> None:
    """Entry point for each worker process.

    Spawned by TrialSupervisor via Process(target=worker_main). Runs until a
    CONTROL/shutdown message is received.

    Args:
        task_queue: Incoming TRIAL_BLOCKS messages from the supervisor.
        result_queue: Outgoing BLOCK_RESULT messages back to the supervisor.
        log_level: Level for this process's JSON logger.
    """
    configure_logging(log_level)
    log.info("worker started")

    while True:
        try:
            msg = ipc.recv(task_queue, timeout=1.0)
        except ipc.IPCError:
            continue

        if msg.type == ipc.MessageType.TRIAL_BLOCKS:
            ipc.send(result_queue, handle_trial_blocks(msg.payload), timeout=30.0)

        elif msg.type == ipc.MessageType.CONTROL:
            action = msg.payload.get("action", "")
            log.info("control message received", extra={"action": action})
            if action == "shutdown":
                break

        else:
            log.warning("unknown message type", extra={"type": str(msg.type)})

    log.info("worker stopped")
