"""Exception types shared across the package."""


class PfgpError(Exception):
    """Base class for package-specific errors."""


class NotSymmetricError(PfgpError):
    """Input matrix is not symmetric within tolerance."""


class JitterCapExceededError(PfgpError):
    """Cholesky failed even at the maximum allowed diagonal jitter.

    Usually signals bad hyperparameters or (near-)duplicated input points.
    """


class DimensionMismatchError(PfgpError, ValueError):
    """Operand shapes do not conform."""


class SingularCovarianceError(PfgpError):
    """A covariance matrix required to be positive definite is singular."""


class ValidationModeRequiredError(PfgpError):
    """Dense O(N^2) evaluation requested above the validation-mode size cap."""


class AuxKindUnsupportedError(PfgpError):
    """Operation is only defined for a different auxiliary-distribution kind."""


class OptimizerDivergedError(PfgpError):
    """Optimizer ended on a non-finite objective value."""


class NonFiniteObjectiveError(PfgpError):
    """Objective or gradient evaluated to NaN/Inf."""


class AllRestartsFailedError(PfgpError):
    """Every optimization restart aborted with a non-finite objective."""


class ConfigError(PfgpError, ValueError):
    """Experiment config file failed to parse or validate."""


class CsvParseError(PfgpError, ValueError):
    """A CSV cell or column failed to parse; carries row/column context."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyAfterCleaningError(PfgpError):
    """No usable rows remain after dropping rows with missing values."""
