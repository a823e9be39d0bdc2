"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or arguments (CLI exit code 1)."""


class EnumerationLimitError(ConfigError):
    """An exact computation would exceed its enumeration cap."""


class NumericalError(RuntimeError):
    """Non-finite values encountered during computation (CLI exit code 2)."""
