"""Exception hierarchy shared by every nfe module."""


class NFEError(Exception):
    """Base class for all errors raised by nfe."""


class InvalidArgumentError(NFEError, ValueError):
    pass


class ParseError(NFEError, ValueError):
    """Malformed embedding file. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(NFEError, ValueError):
    """Corrupt or unsupported binary file (store, record, params)."""


class RangeError(NFEError, ValueError):
    """Value outside the fixed-point representable range."""


class OutOfSupportError(NFEError, ValueError):
    pass


class EnrollmentError(NFEError):
    pass


class ConflictError(NFEError):
    pass


class UncorrectableError(NFEError):
    """Syndrome has no entry in the decoding table."""


class DegenerateOutputWarning(RuntimeWarning):
    """Expander produced a zero vector before normalization."""
