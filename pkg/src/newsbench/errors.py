"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems (parse/validation/integrity/lookup) exit 3, mid-run failures exit 4.
"""
from __future__ import annotations


class NewsbenchError(Exception):
    """Base class for all package errors."""


class ConfigError(NewsbenchError):
    """Invalid or incomplete experiment configuration."""


class DataError(NewsbenchError):
    """Base class for problems with input data."""


class ParseError(DataError):
    """A record could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DataError):
    """Data parsed but violates a documented invariant."""


class IntegrityError(DataError):
    """Cross-record inconsistency, e.g. duplicate identifiers."""


class MissingEmbeddingError(DataError):
    """An item id has no vector in the embedding store."""


class RunError(NewsbenchError):
    """A training/evaluation run failed mid-flight (e.g. divergence)."""
