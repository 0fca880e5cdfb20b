"""Exception types raised by the scattering pipeline."""


class MTMError(Exception):
    """Base class for all pipeline errors."""


class InputFormatError(MTMError):
    """A data file could not be parsed or has an inconsistent shape."""


class ObstructedSpectrumError(MTMError):
    """a(z) vanishes (or nearly vanishes) on the contour, or winds around 0."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class JostOverflowError(MTMError):
    """A Jost frame grew past the overflow bound."""


class WronskianDriftError(MTMError):
    """A Wronskian changed across x stations by more than the tolerance."""


class NonconvergedError(MTMError):
    """The iterative Riemann-Hilbert solve did not reach its tolerance."""


class SingularSystemError(MTMError):
    """Pivot collapse in the dense Riemann-Hilbert solve."""


class GaugeInconsistentError(MTMError):
    """|M(x;0)_11| strayed from 1."""


class TimeStepError(MTMError):
    """Time step incompatible with the x-grid for exact transport."""
