"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1, everything else
raised from a command body -> 2.
"""

__all__ = [
    "AuglmError",
    "ValidationError",
    "FormatError",
    "ConvergenceError",
    "LmError",
    "LmTransportError",
    "LmProtocolError",
    "LmServiceError",
]


class AuglmError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AuglmError):
    """Bad user input: malformed files, out-of-range arguments, missing data."""


class FormatError(ValidationError):
    """A binary or JSONL artifact does not match its documented layout."""


class ConvergenceError(AuglmError):
    """An iterative solver failed to reach its tolerance within the cap."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class LmError(AuglmError):
    """Base class for language-model backend failures."""


class LmTransportError(LmError):
    """The remote service could not be reached after retries."""


class LmProtocolError(LmError):
    """The remote service replied with a payload violating the wire contract."""


class LmServiceError(LmError):
    """The remote service reported an application-level error."""
