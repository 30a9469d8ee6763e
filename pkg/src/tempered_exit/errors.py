"""Exception types raised across the package."""


class TemperedExitError(Exception):
    """Base class for all package errors."""


class ConfigError(TemperedExitError, ValueError):
    """Invalid parameters or configuration."""


class AttemptLimitError(TemperedExitError, RuntimeError):
    """A rejection loop exceeded its attempt cap."""


class EmptySampleError(TemperedExitError, ValueError):
    pass


class InsufficientTailError(TemperedExitError, ValueError):
    pass


class ExcessCensoringError(TemperedExitError, RuntimeError):
    def __init__(self, fraction: float, limit: float):
        super().__init__(f"censored fraction {fraction:.4g} exceeds {limit:.4g}")
        self.fraction = fraction
        self.limit = limit


class ParseError(TemperedExitError, ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"at position {position}: {message}")
        self.position = position
        self.message = message


class EvalDomainError(TemperedExitError, ArithmeticError):
    pass
