"""Exception types shared across the package."""


class RelfactError(Exception):
    """Base class for all package-specific errors."""


class TripleParseError(RelfactError, ValueError):
    """A triple record is malformed (wrong field count or empty label)."""


class ConfigError(RelfactError, ValueError):
    """Invalid hyperparameter or run configuration."""


class DenseCapError(RelfactError, RuntimeError):
    """Materializing a dense slice would exceed the configured entity cap."""


class NumericalError(RelfactError, RuntimeError):
    """A linear solve or optimizer step failed numerically."""


class ModelFileError(RelfactError, RuntimeError):
    """Model file is corrupt, truncated, or dimensionally inconsistent."""


class MetricError(RelfactError, ValueError):
    """Requested metric is undefined for the given inputs."""
