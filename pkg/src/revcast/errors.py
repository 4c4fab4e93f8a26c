"""Exception taxonomy shared across the package."""


class RevcastError(Exception):
    """Base class for all errors raised by revcast."""


class ShapeError(RevcastError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(RevcastError, ValueError):
    """An operation was called outside its documented contract."""


class DataError(RevcastError, ValueError):
    """Input data violates the expected schema or invariants."""


class NumericError(RevcastError, ArithmeticError):
    """A computation produced or encountered non-finite values."""


class ConfigError(RevcastError, ValueError):
    """A configuration value is invalid or inconsistent."""


class CapabilityError(RevcastError, TypeError):
    """The requested operation is not supported by this model kind."""
