"""Exception types shared across the package."""


class LaimrError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(LaimrError, ValueError):
    pass


class UnstableQueueError(LaimrError, ArithmeticError):
    """Raised when a queue has utilization rho >= 1 and no finite delay."""

    def __init__(self, rho, message=None):
        self.rho = rho
        super().__init__(message or f"unstable queue: rho={rho:.6g} >= 1")


class InsufficientDataError(LaimrError, ValueError):
    pass


class InvalidAssignmentError(LaimrError, ValueError):
    pass


class InvalidTimeError(LaimrError, ValueError):
    pass


class RoutingFailureError(LaimrError):
    pass


class NoDataError(LaimrError, ValueError):
    pass


class ConfigError(LaimrError):
    """Invalid scenario configuration.

    ``diagnostics`` lists every violation found, not only the first.
    """

    def __init__(self, diagnostics, source=None):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(self.diagnostics))
