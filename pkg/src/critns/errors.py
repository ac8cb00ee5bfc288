"""Exception hierarchy shared by every module."""


class CritnsError(Exception):
    """Base class for all library errors."""


class MalformedFieldError(CritnsError, ValueError):
    """Coefficients violate Hermitian symmetry or carry non-finite entries."""


class DomainError(CritnsError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class CoverageError(DomainError):
    """A trajectory does not cover the requested time window."""


class OutOfRegimeError(CritnsError, ValueError):
    """The data are too large for the contraction argument (4 eta y >= 1)."""


class ProfileError(CritnsError, ValueError):
    """A profile cannot be placed on, or resampled to, the requested grid."""


class IncomparableError(CritnsError):
    """Two solution routes could not both be completed on a common window."""


class StepFailure(CritnsError):
    """The sub-step fixed-point closure did not converge."""

    def __init__(self, message: str, iterations: int = 0, increment: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.increment = increment


class SnapshotFormatError(CritnsError, ValueError):
    """A binary snapshot file is truncated or carries the wrong magic."""


class ConfigError(CritnsError, ValueError):
    """A suite configuration file is malformed.

    Attributes:
        line: 1-based line number of the offending entry, if known.
        column: 1-based column, if known.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column
