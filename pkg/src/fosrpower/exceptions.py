"""Exception hierarchy shared by all modules."""


class FosrPowerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGridError(FosrPowerError, ValueError):
    """Grid points are too few, unordered, or outside the unit domain."""


class GridMismatchError(FosrPowerError, ValueError):
    """Two functions or arrays live on different grids."""


class DegenerateFunctionError(FosrPowerError, ValueError):
    """An operation needs a function with positive norm."""


class RankDeficiencyError(FosrPowerError, ValueError):
    """Design or data matrix does not have the rank the operation needs."""


class ConfigError(FosrPowerError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class IngestError(FosrPowerError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class IdMismatchError(IngestError):
    """Subject identifiers differ between functional and covariate files."""


class CovarianceError(FosrPowerError, ValueError):
    """Covariance matrix is not (numerically) positive semidefinite."""


class RaggedRowError(IngestError):
    """A row has a different number of cells than the header."""


class NonNumericError(IngestError):
    """A cell that must hold a number does not parse as one."""


class MissingValueError(IngestError):
    """A functional value is empty or marked missing."""


class DuplicateIdError(IngestError):
    """The same subject identifier appears twice in one file."""
