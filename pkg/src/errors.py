"""
Error types for faultsynth
--------------------------
Every failure the library raises on purpose derives from FaultSynthError so
the command-line layer can map it onto an exit code.
"""


class FaultSynthError(Exception):
    """Base class for all deliberate faultsynth failures."""

    exit_code = 2


class ConfigurationError(FaultSynthError, ValueError):
    """Invalid shapes, layer specs, config keys or hyperparameters."""


class IngestionError(FaultSynthError, ValueError):
    """A signal file could not be read or parsed."""

    def __init__(self, message, path=None, line=None, byte_offset=None):
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if byte_offset is not None:
            location.append(f"byte {byte_offset}")
        if location:
            message = f"{': '.join([', '.join(location), message])}"
        super().__init__(message)
        self.path = path
        self.line = line
        self.byte_offset = byte_offset


class DataError(FaultSynthError, ValueError):
    """Data does not satisfy an operation's preconditions."""


class CheckpointError(FaultSynthError, ValueError):
    """A checkpoint or dataset container is malformed."""


class GraphError(FaultSynthError, RuntimeError):
    """Misuse of the autodiff graph (stale graph, non-scalar loss)."""


class NumericError(FaultSynthError, ArithmeticError):
    """A NaN or Inf appeared in a forward or backward pass."""

    exit_code = 3

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step
