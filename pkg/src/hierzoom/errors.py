"""Exception hierarchy shared by every hierzoom module."""


class HierZoomError(Exception):
    """Base class for all package errors."""


class UsageError(HierZoomError):
    """An API or CLI was called in a way its contract forbids."""


class ConfigurationError(HierZoomError, ValueError):
    """Inconsistent shapes, sizes or hyperparameters."""


class DimensionError(ConfigurationError):
    """Tensor operand shapes do not agree."""


class BoundsError(HierZoomError, IndexError):
    """A region or index falls outside the object it refers to."""


class FormatError(HierZoomError, ValueError):
    """A file on disk does not follow its declared format."""


class GenerationError(HierZoomError):
    """Synthetic data generation could not satisfy its constraints."""


class DegenerateInputError(HierZoomError, ValueError):
    """Input is well-formed but the statistic is undefined for it."""
