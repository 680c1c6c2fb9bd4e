"""Exception types shared across the toolkit."""


class VsForecastError(Exception):
    """Base class for all package errors."""


class RankDeficientError(VsForecastError):
    """Gram matrix of the requested support is singular beyond tolerance."""

    def __init__(self, support, message=None):
        self.support = tuple(support)
        super().__init__(message or f"rank-deficient support {self.support}")


class CollinearColumnError(VsForecastError):
    """Candidate column is numerically collinear with the current support."""


class NotApplicableError(VsForecastError):
    """Operation is undefined for the given problem shape."""


class DivergedError(VsForecastError):
    """Iterative solver left the basin of attraction (SSE blew up)."""


class InvalidKError(VsForecastError):
    """Requested sparsity level is outside the valid range."""


class InsufficientHistoryError(VsForecastError):
    """Not enough observations remain after lag and horizon alignment."""


class TooSparseColumnError(VsForecastError):
    """A column has too few observed entries to be usable."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column!r} has fewer than 30% observed entries")


class MissingTransformRowError(VsForecastError):
    """Transform-code row is absent or does not match the header."""


class NonMonotoneDatesError(VsForecastError):
    """Date column is not strictly increasing at monthly frequency."""


class UnparseableCellError(VsForecastError):
    """A data cell could not be parsed as a float or missing value."""

    def __init__(self, row, column, message=None):
        self.row = row
        self.column = column
        super().__init__(message or f"unparseable cell at row {row}, column {column}")


class NonPositiveForLogError(VsForecastError):
    """Log-based transform applied to a non-positive value."""

    def __init__(self, series, position, message=None):
        self.series = series
        self.position = position
        super().__init__(
            message or f"series {series!r} is not positive at index {position}")


class TargetMissingError(VsForecastError):
    """Requested target series is not present in the table."""


class ConfigError(VsForecastError):
    """Invalid configuration value or combination."""

    def __init__(self, field: str, message: str | None = None):
        self.field = field
        super().__init__(message or f"invalid configuration field {field!r}")


class InputMissingError(VsForecastError):
    """A required input file does not exist."""

    def __init__(self, path, message: str | None = None):
        self.path = str(path)
        super().__init__(message or f"required input {path} does not exist")
