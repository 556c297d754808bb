"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration values."""


class GuardViolation(RuntimeError):
    """A runtime guard (vacuum, pressure radius, overflow) tripped.

    ``snapshot`` carries the offending state when one is available so the
    caller can dump it for forensics.
    """

    def __init__(self, guard: str, message: str, snapshot=None):
        super().__init__(f"{guard}: {message}")
        self.guard = guard
        self.snapshot = snapshot


class GevreyOverflowError(ValueError):
    """The analytic weight would overflow double precision."""

    def __init__(self, message: str, max_time: float):
        super().__init__(message)
        self.max_time = max_time
