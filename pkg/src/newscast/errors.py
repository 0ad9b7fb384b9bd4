"""Exception types shared across the pipeline."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class DataError(ValueError):
    """An input file or in-memory dataset violates its contract."""


class DependencyError(RuntimeError):
    """A pipeline stage was invoked before its upstream artifacts exist."""


class InsufficientUniverseError(DataError):
    """Fewer than ten ranked candidates at a date; deciles are undefined."""


class NumericError(ArithmeticError):
    """A NaN or Inf was detected while debug validation is enabled."""
