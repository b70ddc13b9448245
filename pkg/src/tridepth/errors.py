"""Exception types shared across the package."""

__all__ = [
    "DimensionError",
    "DomainError",
    "FormatError",
    "ConfigError",
    "RangeError",
    "EvaluationError",
]


class DimensionError(ValueError):
    """Array or grid shapes do not agree."""


class DomainError(ValueError):
    """A value lies outside an operation's mathematical domain."""


class FormatError(ValueError):
    """A file or byte stream violates its declared format."""


class ConfigError(FormatError):
    """Configuration contents are malformed or carry unknown keys."""


class RangeError(DomainError):
    """A value cannot be represented in the target encoding."""


class EvaluationError(DomainError):
    """Prediction does not cover the ground-truth evaluation set."""
