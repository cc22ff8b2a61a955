"""Exception types shared across the toolkit.

ValidationError maps to CLI exit code 1, FormatError (bad input files,
malformed data) to exit code 2.
"""


class ToolkitError(Exception):
    pass


class ValidationError(ToolkitError):
    """Invalid configuration, parameters, or data constraints."""


class FormatError(ToolkitError):
    """Malformed input file (TSV, ARPA, NPY, vocab)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
