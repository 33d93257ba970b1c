"""Exception types shared across the package."""


class NonPositiveBandwidth(ValueError):
    """Smoothing bandwidth must be strictly positive."""


class DimensionMismatch(ValueError):
    """Vector/matrix shapes do not agree."""


class AlphaOutOfRange(ValueError):
    """Type-I error level must lie in [0, 1]."""


class NegativeBudget(ValueError):
    """Privacy budgets must be non-negative."""


class NonPositiveMu(ValueError):
    """The GDP privacy parameter must be strictly positive here."""


class MissingWhitener(ValueError):
    """A covariance whitener is required in this mode but was not supplied."""


class InvalidCovariance(ValueError):
    """Covariance matrix is not symmetric positive definite."""


class SingularCovariance(ValueError):
    """Covariance matrix is numerically singular."""


class SplitTooLarge(ValueError):
    """Requested training size does not leave a non-empty test set."""


class MissingColumn(ValueError):
    """A required CSV column is absent."""


class NonNumericCell(ValueError):
    """A CSV cell could not be parsed as a finite number."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric cell at row {row}, column {column!r}: {value!r}")


class MaxIterExceeded(RuntimeError):
    """Iterative solver did not reach the requested tolerance."""


class LineSearchFailed(RuntimeError):
    """Armijo backtracking exhausted its shrink budget."""
