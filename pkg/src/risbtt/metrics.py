"""
Process-local counters and gauges for risbtt runs.

Values are tracked in memory per process (the supervisor counts dispatched
blocks, each worker counts the trials it simulated). `exposition_text()`
renders the Prometheus text format; `snapshot()` gives a flat dict for logs.

Metric naming convention:  risbtt_<subsystem>_<name>[_total]

Usage:
    from risbtt.metrics import METRICS
    METRICS.trials_simulated.inc(4096)
    METRICS.workers_active.set(8)
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, fields


class Counter:
    """Monotonically increasing counter."""

    def __init__(self, name: str, help_text: str) -> None:
        self.name = name
        self.help_text = help_text
        self._value: float = 0.0
        self._lock = threading.Lock()

    def inc(self, amount: float = 1.0) -> None:
        if amount < 0:
            raise ValueError("counter increments must be >= 0")
        with self._lock:
            self._value += amount

    @property
    def value(self) -> float:
        return self._value

    def exposition(self) -> str:
        return (
            f"# HELP {self.name} {self.help_text}\n"
            f"# TYPE {self.name} counter\n"
            f"{self.name}_total {self._value}\n"
        )


class Gauge:
    """Arbitrarily settable gauge."""

    def __init__(self, name: str, help_text: str) -> None:
        self.name = name
        self.help_text = help_text
        self._value: float = 0.0
        self._lock = threading.Lock()

    def set(self, value: float) -> None:
        with self._lock:
            self._value = value

    @property
    def value(self) -> float:
        return self._value

    def exposition(self) -> str:
        return (
            f"# HELP {self.name} {self.help_text}\n"
            f"# TYPE {self.name} gauge\n"
            f"{self.name} {self._value}\n"
        )


@dataclass
class _MetricsRegistry:
    """All process-level metrics."""

    trials_simulated: Counter = field(
        default_factory=lambda: Counter(
            "risbtt_trials_simulated", "Monte Carlo trials evaluated, pooled ones included"
        )
    )
    blocks_completed: Counter = field(
        default_factory=lambda: Counter(
            "risbtt_blocks_completed", "Trial blocks reduced into an estimate"
        )
    )
    quadrature_intervals: Counter = field(
        default_factory=lambda: Counter(
            "risbtt_quadrature_intervals",
            "Gauss-Kronrod panels evaluated by the adaptive integrator",
        )
    )
    meijer_evaluations: Counter = field(
        default_factory=lambda: Counter(
            "risbtt_meijer_evaluations", "Mellin-Barnes contour evaluations"
        )
    )
    sweep_points: Counter = field(
        default_factory=lambda: Counter(
            "risbtt_sweep_points", "Sweep grid points evaluated"
        )
    )
    workers_active: Gauge = field(
        default_factory=lambda: Gauge(
            "risbtt_workers_active", "Monte Carlo worker processes currently running"
        )
    )

    def _all(self) -> list[Counter | Gauge]:
        return [getattr(self, f.name) for f in fields(self)]

    def exposition_text(self) -> str:
        return "\n".join(metric.exposition() for metric in self._all())

    def snapshot(self) -> dict[str, float]:
        return {metric.name: metric.value for metric in self._all()}


# Module-level singleton, one per process
METRICS = _MetricsRegistry()
