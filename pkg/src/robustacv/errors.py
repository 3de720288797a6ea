"""Exception hierarchy shared by the whole toolkit.

Exit-code mapping used by the CLI: validation-type failures exit with 2,
numeric failures with 3.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3


class ValidationError(ToolkitError, ValueError):
    """Invalid argument, precondition violation or malformed input."""

    exit_code = 2


class RangeError(ValidationError):
    """An index, lag or order-statistic rank is out of range."""


class DomainError(ValidationError):
    """A parameter lies outside its mathematical domain."""


class DegenerateSampleError(ValidationError):
    """The sample is too small for the requested estimator."""


class RegimeError(ValidationError):
    """The requested formula does not apply to the dependence regime."""


class NumericError(ToolkitError):
    """A numerical computation failed or diverged."""

    exit_code = 3


class ParseError(ValidationError):
    """A data file could not be parsed; carries the offending line."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
