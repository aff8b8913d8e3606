"""Exception types shared across the package."""


class SganSegError(Exception):
    """Base class for all package errors."""


class ParameterError(SganSegError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(SganSegError, ValueError):
    """Array or tensor shapes do not agree."""


class FormatError(SganSegError, ValueError):
    """A file does not follow the expected format."""


class LengthError(FormatError):
    """A file payload is shorter than its header promises."""


class UninitializedStatsError(SganSegError, RuntimeError):
    """Batch-norm running statistics used before any training step."""


class ConfigError(SganSegError, ValueError):
    """Invalid run configuration."""
