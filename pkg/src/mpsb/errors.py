"""Exception hierarchy shared across the package."""


class MPSBError(Exception):
    """Base class for all package errors."""


class DomainError(MPSBError, ValueError):
    """An argument lies outside the domain of a function."""


class ConvergenceError(MPSBError, ArithmeticError):
    """An iterative evaluation ran out of budget.

    ``partial`` holds the last estimate reached before giving up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SamplerInefficiencyError(MPSBError, RuntimeError):
    """The rejection sampler cannot reach a usable acceptance rate.

    Callers should switch to the SIS propagation path.
    """

    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class DegenerateFilterError(MPSBError, ArithmeticError):
    """Every particle weight underflowed; ``state`` is the pre-step state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class UndefinedMetricError(MPSBError, ValueError):
    """A metric has no defined value for the given input."""


class DataError(MPSBError, ValueError):
    """Malformed input data. ``row`` and ``column`` locate the problem when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(MPSBError, ValueError):
    """Invalid run or model configuration."""
