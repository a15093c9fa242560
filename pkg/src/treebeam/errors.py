"""Exception types shared across the package.

Plain ``ValueError`` is used for invalid arguments to individual operations;
the classes below mark failures that callers (notably the CLI) need to tell
apart.
"""


class ConfigError(ValueError):
    """A configuration document is malformed or internally inconsistent."""


class DataError(ValueError):
    """An input dataset or artifact file is missing, malformed, or unusable."""


class TrainingDiverged(RuntimeError):
    """Training produced non-finite gradients or parameters."""
