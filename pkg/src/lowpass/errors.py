"""Error hierarchy. Each class names the CLI exit code it maps to."""

from __future__ import annotations

from .config import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


class LowpassError(Exception):
    exit_code = EXIT_USAGE


class UsageError(LowpassError):
    pass

class ConfigError(UsageError):
    pass

class ActivationError(LowpassError):
    pass

class CorruptionError(LowpassError):
    pass

class OptimizerError(LowpassError):
    pass

class MetricError(LowpassError):
    pass

class DecisionMapError(LowpassError):
    pass


class ShapeMismatch(LowpassError):

    def __init__(self, layer_index: int, expected: tuple, actual: tuple, detail: str = ""):
        self.layer_index = layer_index
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        msg = f"Layer {layer_index}: expected input shape {self.expected}, got {self.actual}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DataError(LowpassError):
    exit_code = EXIT_DATA


class DataFormatError(DataError):

    def __init__(self, path: str, offset: int, message: str):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: {message} at byte offset {offset}")


class NumericError(LowpassError):
    exit_code = EXIT_NUMERIC

class TapeError(NumericError):
    pass
