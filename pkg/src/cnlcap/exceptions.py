"""Exception hierarchy shared by every solver component."""


class CnlError(Exception):
    """Base class for errors raised by cnlcap."""


class DomainError(CnlError, ValueError):
    """A quantity is undefined at the requested point (empty market, log of zero)."""


class PreconditionError(CnlError, ValueError):
    """An operation was called on an instance outside its supported class."""


class ConfigurationError(CnlError, ValueError):
    """Generator or instance parameters are inconsistent."""


class NumericRangeError(CnlError, ArithmeticError):
    """An argument would overflow double precision."""


class ResourceLimitError(CnlError, RuntimeError):
    """A requested computation exceeds a configured size ceiling."""
