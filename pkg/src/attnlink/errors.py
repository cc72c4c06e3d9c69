"""Exception classes shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigurationError(ValueError):
    """A configuration value is structurally invalid (bad sizes, unknown keys, ...)."""


class InputError(ValueError):
    """A runtime input value is out of its documented range."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


class FormatError(ValueError):
    """A serialized file does not match its documented byte layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(ValueError):
    """Input is degenerate for the requested analysis (e.g. all values identical)."""
