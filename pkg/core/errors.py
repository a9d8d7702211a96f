"""
Exception hierarchy for the prediction pipeline.

All errors derive from ValueError so callers that only know the plain
ValueError contract keep working. Each class carries the process exit code
the command-line front-end reports for it.
"""

from typing import Optional


class PipelineError(ValueError):
    """Base class for all pipeline errors."""

    exit_code = 3


class ConfigError(PipelineError):
    """Invalid configuration or parameters (schema violations, unknown keys)."""

    exit_code = 2


class DataError(PipelineError):
    """Malformed input files, empty inputs or degenerate signals."""

    exit_code = 3


class ParseError(DataError):
    """A row of an input file could not be parsed.

    Attributes:
        line: 1-based line number in the file (the header is line 1)
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class LeakageError(PipelineError):
    """Held-out participant data was read inside a training scope."""

    exit_code = 4
