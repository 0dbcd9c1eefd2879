"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems exit with 3, numerical
failures with 4.
"""


class SpectrecError(Exception):
    """Base class for all package errors."""


class DataError(SpectrecError, ValueError):
    """Input data is inconsistent or malformed."""


class IncompatibleMaskError(DataError):
    """Sampling mask does not match the image or measurement dimensions."""


class FormatError(DataError):
    """A file on disk does not follow the expected format."""


class DegenerateCovarianceError(DataError):
    pass


class NoSignalSubspaceError(DataError):
    pass


class NumericalError(SpectrecError, FloatingPointError):
    """An iterative solver produced non-finite values."""
