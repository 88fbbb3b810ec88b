"""Exception hierarchy for bataxis.

Input problems subclass ValueError and runtime/numeric failures subclass
RuntimeError, so callers that already catch the builtin types keep working.
"""

from typing import Optional


class BataxisError(Exception):
    """Base class for every error raised by bataxis."""


class DimensionError(BataxisError, ValueError):
    """Shapes or widths do not line up."""


class DegenerateSliceError(BataxisError, ValueError):
    """A pooled slice has no unmasked element."""


class DegenerateAttentionError(BataxisError, ValueError):
    """Every key is padded for at least one query."""


class NumericError(BataxisError, RuntimeError):
    """A non-finite value showed up in an op output or a gradient."""


class DataSizeError(BataxisError, ValueError):
    pass


class CompositionError(BataxisError, ValueError):
    pass


class SparsityError(BataxisError, ValueError):
    pass


class SpecError(BataxisError, ValueError):
    pass


class SchemaError(BataxisError, ValueError):
    pass


class ParseError(BataxisError, ValueError):
    """Malformed NDJSON line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class RegistryError(BataxisError, ValueError):
    pass


class StateError(BataxisError, ValueError):
    pass


class MetricError(BataxisError, ValueError):
    pass


class TrainingError(BataxisError, RuntimeError):
    """Training diverged."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")


class SweepError(BataxisError, RuntimeError):
    pass


class CheckpointError(BataxisError, ValueError):
    pass


class ConfigError(BataxisError, ValueError):
    pass
