"""Exception types shared across the package."""


class DensiflowError(Exception):
    """Base class for all package-specific failures."""


class GridMismatch(DensiflowError):
    """Operands live on different grids."""


class NonFiniteField(DensiflowError):
    """A field contains NaN or Inf samples."""


class BadExponent(DensiflowError):
    """Unsupported Lebesgue exponent."""


class DegenerateField(DensiflowError):
    """An operation's denominator vanishes (e.g. constant field in a ratio)."""


class NonPositiveTimes(DensiflowError):
    """A time argument that must be positive is not."""


class TrackError(DensiflowError):
    """Malformed time track (non-increasing times, mixed grids, ...)."""


class OutOfRange(DensiflowError):
    """A time or parameter falls outside the valid window."""


class WrapAround(DensiflowError):
    """Support growth would wrap around the periodic box."""


class DomainError(DensiflowError):
    """A scalar map is not defined on the range of its argument."""


class CFLViolation(DensiflowError):
    """Time step too large for the current velocity/viscosity."""


class BoundsBreach(DensiflowError):
    """Density left the declared [c0, C0] corridor."""


class PressureSolveStall(DensiflowError):
    """Pressure CG failed to reach tolerance within the iteration cap."""


class BadTestFunction(DensiflowError):
    """Test function violates a precondition (e.g. not divergence-free)."""


class BadTol(DensiflowError):
    """Nonsensical tolerance request."""


class NegativeEntries(DensiflowError):
    """An array that must be nonnegative has negative entries."""


class ParseError(DensiflowError):
    """Config text could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(DensiflowError):
    """Config parsed but a value (or key) is invalid."""


class FormatError(DensiflowError):
    """A binary field file is malformed."""


class BadParams(DensiflowError):
    """Initial-data parameters outside their documented ranges."""


class TooFewSnapshots(DensiflowError):
    """A trajectory stores too few states for the requested evaluation."""


class DegeneratePair(DensiflowError):
    """A trajectory pair whose initial velocities coincide."""


class BadGrid(DensiflowError):
    """Malformed graded quadrature grid."""


class IoError(DensiflowError):
    """A file could not be read or written."""
