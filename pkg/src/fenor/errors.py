"""Exception hierarchy shared by all modules."""


class FenorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FenorError, ValueError):
    """Malformed or inconsistent configuration input."""


class ConvergenceError(FenorError, RuntimeError):
    """A nonlinear solve did not converge.

    ``residual`` carries the last residual norm and ``index`` the failing
    step (waveform point or timestep) when one applies.
    """

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class SingularCircuitError(FenorError, RuntimeError):
    """The network matrix is structurally singular (e.g. a floating node)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class InfeasibleError(FenorError, RuntimeError):
    """A design target cannot be met within the allowed search range."""

    def __init__(self, message, achieved=None, bound=None):
        super().__init__(message)
        self.achieved = achieved
        self.bound = bound
