"""Exception hierarchy.

User-facing errors (bad configuration, bad input files) and numerical
failures are kept apart so the CLI can map them onto distinct exit codes.
"""


class ThreshovaError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ThreshovaError, ValueError):
    """Invalid parameters or an inconsistent model specification."""


class DomainError(ConfigurationError):
    """An argument lies outside the domain of a function."""


class IngestionError(ConfigurationError):
    """A data or spec file could not be parsed."""

    def __init__(self, message, *, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(ThreshovaError, ArithmeticError):
    """A computation failed for numerical reasons."""

    def __init__(self, message, *, block=None):
        self.block = block
        if block is not None:
            message = f"block '{block}': {message}"
        super().__init__(message)


class SingularDesignError(NumericalError):
    pass


class RankError(NumericalError):
    pass


class ZeroVarianceError(NumericalError):
    pass


class DegreesOfFreedomError(NumericalError):
    pass


class CalibrationError(NumericalError):
    pass


class UnavailableError(ThreshovaError, LookupError):
    """Requested quantity cannot be computed from the available data."""
