"""Exception types shared across the package."""


class AcmvError(Exception):
    """Base class for all package errors."""


class ShapeError(AcmvError, ValueError):
    pass


class BoundsError(AcmvError, IndexError):
    pass


class ConfigError(AcmvError, ValueError):
    pass


class ValidationError(AcmvError, ValueError):
    pass


class NumericError(AcmvError, ArithmeticError):
    pass


class StateError(AcmvError, RuntimeError):
    pass


class EmptyDatasetError(AcmvError, ValueError):
    pass


class ParseError(AcmvError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InvariantError(AcmvError, AssertionError):
    pass
