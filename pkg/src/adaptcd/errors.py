"""Exception hierarchy for the change-detection pipeline."""


class AdaptcdError(Exception):
    """Base class for all pipeline errors."""


class DimensionMismatchError(AdaptcdError):
    """Two rasters/tensors that must share dimensions do not."""


class MalformedMaskError(AdaptcdError):
    """An RLE mask violates its structural invariants."""


class EmptyRegionError(AdaptcdError):
    """An operation that requires at least one set pixel got an empty mask."""


class GridTooSmallError(AdaptcdError):
    """Input grid is below the minimum size for the requested operation."""


class ConfigError(AdaptcdError):
    """Invalid or inconsistent configuration values."""


class FormatError(AdaptcdError):
    """A provider/exchange file violates its declared format."""


class ProviderError(AdaptcdError):
    """A provider failed to produce a usable result."""


class CorruptFeatureError(ProviderError):
    """A feature tensor contains non-finite values."""


class MissingPrototypeError(ProviderError):
    """A text prototype has no embedding in the active provider."""
