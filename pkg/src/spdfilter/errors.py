"""Exception types shared across the package."""


class SpdFilterError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(SpdFilterError):
    """Malformed numeric input (non-finite entries, wrong shape, bad length)."""


class DimensionMismatch(SpdFilterError):
    """Operands live in different dimensions."""


class NotPositiveDefinite(SpdFilterError):
    """A matrix required to be SPD failed the eigenvalue guard."""


class MaxIterExceeded(SpdFilterError):
    """An iterative solver hit its iteration cap before converging.

    Carries the last iterate and the residual at that point.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class InvalidModel(SpdFilterError):
    """A discrete probability model violates its structural invariants."""


class DegenerateData(SpdFilterError):
    """A data series carries no usable signal (e.g. constant observations)."""


class DegenerateSample(SpdFilterError):
    """A bootstrap sample has zero variance; only a point interval exists."""


class ParseError(SpdFilterError):
    """An input file could not be parsed."""


class EmptyPanel(SpdFilterError):
    """A price panel contains no usable rows."""


class WindowTooLarge(SpdFilterError):
    """A rolling window exceeds the available data."""
