"""Exception hierarchy shared by every module in the package."""


class GraphBridgeError(Exception):
    """Base class for all package errors."""


class ValidationError(GraphBridgeError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class NumericError(GraphBridgeError, ArithmeticError):
    pass


class SamplingError(GraphBridgeError):
    pass


class TrainingError(GraphBridgeError):
    pass


class ConfigError(ValidationError):
    pass


class DataFormatError(ValidationError):
    """Raised when an input file cannot be parsed; carries the offending line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
