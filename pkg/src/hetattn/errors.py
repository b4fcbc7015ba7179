"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """An argument violates a documented precondition."""


class FormatError(ValueError):
    """A data file failed to parse or validate; message carries context."""


class NoConvergence(RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class NumericalFailure(RuntimeError):
    """A computation produced a non-finite value."""


class ConfigError(ValueError):
    """A configuration file is missing a key or holds an invalid value."""
