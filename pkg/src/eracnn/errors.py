"""Exception hierarchy shared across the package."""


class EracnnError(Exception):
    """Base class for all package errors."""


class ShapeError(EracnnError, ValueError):
    """An array does not have the extents an operation requires."""


class NumericError(EracnnError, ArithmeticError):
    """A computation produced NaN/Inf or an undefined statistic."""


class GraphError(EracnnError, RuntimeError):
    """Misuse of the compute graph (e.g. backward before forward)."""


class DataError(EracnnError, ValueError):
    """A file or data set is invalid."""


class MalformedHeaderError(DataError):
    """The JSON header of a container file could not be parsed."""


class TruncatedPayloadError(DataError):
    """The binary payload is shorter (or longer) than the header declares."""


class VersionMismatchError(DataError):
    """The file declares a format version this code does not read."""
