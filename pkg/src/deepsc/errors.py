"""Exception types raised across the package."""


class DeepSCError(Exception):
    """Base class for all package errors."""


class GeometryError(DeepSCError, ValueError):
    """Incompatible tensor or kernel shapes."""


class NumericDivergenceError(DeepSCError, ArithmeticError):
    """Non-finite values appeared during an update."""

    def __init__(self, message, layer=None, iteration=None):
        super().__init__(message)
        self.layer = layer
        self.iteration = iteration


class GraphError(DeepSCError, ValueError):
    """Invalid layer graph or reference to an unknown layer."""


class PreconditionError(DeepSCError, ValueError):
    """An operation was called with inputs outside its domain."""


class RenderError(DeepSCError, ValueError):
    """Text cannot be rasterized (too long or unprintable)."""


class IngestionError(DeepSCError, OSError):
    """A corpus file is missing or cannot be decoded."""


class ConfigError(DeepSCError, ValueError):
    """Configuration file failed validation."""


class CheckpointError(DeepSCError, ValueError):
    """Checkpoint file is malformed or has an unsupported version."""
