"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment or data configuration."""


class CheckpointError(RuntimeError):
    """Malformed, truncated, or otherwise unreadable checkpoint file."""


class NonFiniteLossError(ArithmeticError):
    """A training loss became NaN or infinite; the run is aborted."""
