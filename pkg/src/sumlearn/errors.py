"""Exception hierarchy shared across the package."""


class SumlearnError(Exception):
    """Base class for all package errors."""


class DataError(SumlearnError):
    """Problems with cohort data (ingestion, schema, shapes)."""


class ParseError(DataError):
    """A CSV row could not be parsed. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(DataError):
    """A value falls outside its documented range (e.g. hour > T)."""


class ConflictError(DataError):
    """Duplicate (patient, variable, hour) rows."""


class SchemaError(DataError):
    """Unknown variable/column names or malformed headers."""


class CheckpointFormatError(SumlearnError):
    """Checkpoint document missing required fields or wrong version."""


class NumericalError(SumlearnError):
    """Non-finite loss or gradients during training/evaluation."""


class UsageError(SumlearnError):
    """Bad command-line usage."""
