class RegsynthError(Exception):
    """Base class for toolkit errors."""


class FormatError(RegsynthError, ValueError):
    """A grid or design file does not conform to its text format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(RegsynthError, ArithmeticError):
    """A factorization, solve or iteration failed."""
