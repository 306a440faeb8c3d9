"""Exception types raised across the library."""


class ShBrdfError(Exception):
    """Base class for all library errors."""


class InsufficientSamples(ShBrdfError):
    """Too few directional samples for the requested operation."""


class SingularSystem(ShBrdfError):
    """Unregularized normal equations are rank-deficient."""


class DegenerateIrradiance(ShBrdfError):
    """Irradiance too small to recover diffuse reflectance."""


class UnsupportedFormat(ShBrdfError):
    """Input file is not in a supported format."""


class NonHdrInput(ShBrdfError):
    """Input image is not linear HDR data."""


class IoFailure(ShBrdfError):
    """Failed to read or write an output file."""


class LayoutMismatch(ShBrdfError):
    """Runs to merge do not share the same UV layout."""


class NonFiniteLoss(ShBrdfError):
    """Optimization loss became NaN or infinite."""
