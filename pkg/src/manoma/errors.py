"""Exception types shared across the package."""


class ManomaError(Exception):
    """Base class for all package errors."""


class ConfigError(ManomaError, ValueError):
    """Invalid scenario or experiment configuration."""


class InvalidInputError(ManomaError, ValueError):
    """Arguments with inconsistent shapes or empty where data is required."""


class ContractError(ManomaError, ValueError):
    """A documented precondition was violated by the caller."""


class DegenerateChannelError(ManomaError, ValueError):
    """A received signal power that must be positive is exactly zero."""
