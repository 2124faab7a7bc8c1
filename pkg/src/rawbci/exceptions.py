"""Exception hierarchy.

Every error raised deliberately by the package derives from ``RawBCIError``
so callers (the CLI in particular) can separate expected failures from bugs.
"""


class RawBCIError(Exception):
    """Base class for all package errors."""


class ShapeError(RawBCIError, ValueError):
    """Operand shapes are incompatible."""


class CallOrderError(RawBCIError, RuntimeError):
    """A stateful layer was used out of order (e.g. backward before forward)."""


class ConfigError(RawBCIError, ValueError):
    """A configuration field is missing, unknown or out of range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NonFiniteError(RawBCIError, ValueError):
    """NaN or Inf encountered where only finite values are allowed."""


# -- recordings ---------------------------------------------------------------


class RecordingError(RawBCIError, ValueError):
    """Base class for recording file problems."""


class EmptyRecordingError(RecordingError):
    pass


class ColumnCountError(RecordingError):
    """A data row has missing or extra cells relative to the header."""


class NonNumericCellError(RecordingError):
    pass


class UnknownModalityError(RecordingError):
    pass


class SidecarError(RecordingError):
    """The JSON metadata sidecar is malformed or incomplete."""


class ScheduleMismatchError(RecordingError):
    """Recording length disagrees with its session schedule."""


class EpochBoundsError(RecordingError):
    """An activity window runs past the end of the recording."""


# -- epoch sets ---------------------------------------------------------------


class FusionError(RawBCIError, ValueError):
    pass


class SplitError(RawBCIError, ValueError):
    pass


# -- checkpoints --------------------------------------------------------------


class CheckpointError(RawBCIError, ValueError):
    pass


class CheckpointParseError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass
