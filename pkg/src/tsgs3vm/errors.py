"""Exception hierarchy. Each leaf maps to one CLI exit code."""


class TSGError(Exception):
    exit_code = 1


class ConfigError(TSGError, ValueError):
    exit_code = 4


class ShapeError(TSGError, ValueError):
    exit_code = 7


class InputError(TSGError, ValueError):
    """Bad or insufficient data (empty pools, unusable label alphabet, ...)."""

    exit_code = 3


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SplitError(InputError):
    pass


class ModelFormatError(ParseError):
    """Model file is not readable as a model."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class DivergenceError(TSGError, ArithmeticError):
    exit_code = 5

    def __init__(self, message, iteration):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class ResourceError(TSGError):
    exit_code = 6
