"""Exception hierarchy shared across the package."""


class ChainQfiError(Exception):
    """Base class for all package errors."""

    kind = "error"


class ConfigurationError(ChainQfiError, ValueError):
    kind = "configuration"


class ResourceError(ChainQfiError, MemoryError):
    kind = "resource"


class NumericError(ChainQfiError, ArithmeticError):
    kind = "numeric"


class ContractError(ChainQfiError, ValueError):
    """An input violates a documented precondition (e.g. an unnormalised state)."""

    kind = "contract"


class DegenerateMeasurementError(NumericError):
    """The SLD has a vanishing Bloch part, so the measurement carries no information."""

    kind = "degenerate-measurement"


class ProtocolError(ChainQfiError, RuntimeError):
    kind = "protocol"
