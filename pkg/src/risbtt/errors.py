from __future__ import annotations


class RisBttError(Exception):
    """Base class for all risbtt errors."""


class DomainError(RisBttError, ValueError):
    """Raised when an argument lies outside an operation's mathematical domain."""


class DegenerateError(RisBttError, ValueError):
    """Raised when a model quantity does not exist (no RIS term, zero-moment fit)."""


class NonConvergenceError(RisBttError, ArithmeticError):
    """Raised when a series, continued fraction, quadrature or contour misses tolerance."""


class ConsistencyError(RisBttError):
    """Raised when the quadrature and Meijer-G evaluations of a metric disagree."""


class ConfigError(RisBttError, ValueError):
    """Raised on invalid experiment configuration.

    Attributes:
        field: Dotted path of the offending key (e.g. ``params.d_tl``), or None.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SimulationError(RisBttError):
    """Raised when a worker fails while evaluating a block of Monte Carlo trials."""


class IPCError(RisBttError):
    """Raised on IPC send/recv failures."""


class EmitError(RisBttError, OSError):
    """Raised when curve data cannot be written; the message names the path."""
