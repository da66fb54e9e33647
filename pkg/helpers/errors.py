from typing import Iterable, Optional


class CNGCFError(Exception):
    def __init__(self, message):
        super().__init__(message)
        self.message = message


# Usage / configuration ##############################################################

class UsageError(CNGCFError):
    pass


class ConfigError(CNGCFError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("Invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


# Data ###############################################################################

class DataError(CNGCFError):
    pass


class IngestionError(DataError):
    def __init__(self, message, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(DataError):
    pass


class UnknownNodeError(DataError, LookupError):
    pass


class CheckpointLoadError(DataError):
    pass


# Numeric ############################################################################

class NumericError(CNGCFError):
    pass


class DimensionError(NumericError, ValueError):
    @classmethod
    def for_shapes(cls, operation: str, *shapes: Iterable[int]):
        shown = " and ".join(str(tuple(shape)) for shape in shapes)
        return cls(f"{operation}: incompatible shapes {shown}")


class InvalidInputError(NumericError, ValueError):
    pass


class NumericOverflowError(NumericError):
    def __init__(self, message, layer: Optional[int] = None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class NonFiniteLossError(NumericError):
    def __init__(self, epoch: int, batch: int, term: str):
        super().__init__(f"Non-finite loss at epoch {epoch}, batch {batch}: {term}")
        self.epoch = epoch
        self.batch = batch
        self.term = term


class EncoderConsistencyError(NumericError):
    pass
