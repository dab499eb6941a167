"""Exception taxonomy shared by all oodkit modules."""


class OodkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(OodkitError):
    """File does not match the expected on-disk layout (bad magic, version, header)."""


class TruncationError(FormatError):
    """Payload is shorter (or longer) than the header promises."""


class DataError(OodkitError):
    """Values violate a data invariant (NaN/Inf where finite values are required)."""


class ShapeError(OodkitError):
    """Dimensions of two operands do not line up."""


class DomainError(OodkitError):
    """A parameter is outside its documented domain."""


class CalibrationError(OodkitError):
    """Calibration was asked to fit on unusable input (e.g. an empty sample)."""
