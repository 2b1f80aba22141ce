"""Exception hierarchy shared by all relaxkit modules."""


class RelaxkitError(Exception):
    """Base class for every error raised by relaxkit."""


class DomainError(RelaxkitError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ParameterError(DomainError):
    """A family or model parameter is out of its admissible range."""


class InversionError(RelaxkitError, ArithmeticError):
    """Numerical Laplace inversion produced non-finite values."""


class ConvergenceError(RelaxkitError, ArithmeticError):
    """An iterative method did not converge within its budget."""


class ExtensionNeeded(RelaxkitError):
    """A simulated path does not reach the requested time; extend it first."""

    def __init__(self, message, needed_time=None):
        super().__init__(message)
        self.needed_time = needed_time


class ConfigError(RelaxkitError, ValueError):
    """Malformed user configuration (CLI flags, descriptors, model files)."""
