"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
everything else -> 4.
"""


class LabelAugError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(LabelAugError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(LabelAugError, ValueError):
    """An input value lies outside the mathematical domain of a kernel."""


class ValidationError(LabelAugError, ValueError):
    """An argument violates a documented precondition."""


class TapeError(LabelAugError, RuntimeError):
    """Gradient-tape misuse: wrong tape, missing tape, or repeated backward."""


class ConfigError(LabelAugError, ValueError):
    """A configuration file or option is malformed or inconsistent."""


class DataError(LabelAugError, ValueError):
    """A dataset file is missing, truncated, or otherwise unreadable."""
