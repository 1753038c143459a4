"""Exception types raised across the package."""


class ShapeError(ValueError):
    """A tensor or array has the wrong shape for the operation."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ValidationError(ValueError):
    """Input data violates a value-domain precondition (e.g. non-binary mask)."""


class IngestionError(IOError):
    """A dataset file is missing, unreadable or incomplete."""


class NonFiniteLossError(RuntimeError):
    """Training produced a NaN/Inf loss term."""


class GradCheckError(AssertionError):
    """Analytic and numerical gradients disagree beyond tolerance."""


class DepthAccessError(RuntimeError):
    """A depth file was touched on a path that must stay depth-free."""
