"""Exception types raised across the package."""


class LadderError(Exception):
    """Base class for all package errors."""


class ShapeError(LadderError, ValueError):
    pass


class ArgumentError(LadderError, ValueError):
    pass


class NumericError(LadderError, ArithmeticError):
    """A NaN or Inf showed up where only finite values are allowed."""


class StateError(LadderError, RuntimeError):
    """A cache or trace was reused or does not belong to the caller."""


class ConfigError(LadderError, ValueError):
    pass


class DataError(LadderError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
