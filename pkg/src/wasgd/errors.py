"""Exception hierarchy shared by all modules."""


class WasgdError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(WasgdError, ValueError):
    """Malformed experiment configuration or scheme string."""


class NumericalError(WasgdError, ArithmeticError):
    """Base class for numerical failures (CLI exit code 3)."""


class NotSpd(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NotAvailable(WasgdError):
    pass


class Unsupported(WasgdError):
    pass


class OutOfOrder(WasgdError):
    pass


class InsufficientBuffer(WasgdError):
    pass


class ZeroRegressor(WasgdError, ValueError):
    pass


class ZeroInitError(WasgdError, ValueError):
    pass


class LevelNotTabulated(WasgdError, KeyError):
    pass
