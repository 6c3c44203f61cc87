"""Exception types shared across the package.

The CLI maps these onto process exit codes, so raising the right type
matters more than the message wording: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4. Anything else bubbles up as a generic failure.
"""


class ConfigError(ValueError):
    """A configuration file, key, or value is invalid."""


class DataError(ValueError):
    """A dataset is missing, malformed, or internally inconsistent."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
