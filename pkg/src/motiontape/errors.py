"""Exception hierarchy shared by the pipeline stages.

The CLI maps ConfigError/DataError (and subclasses) to exit code 2 and
TrainingFailure to exit code 3.
"""


class MotionTapeError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(MotionTapeError):
    """A configuration value is missing, malformed, or out of range."""


class ModeError(ConfigError):
    """An artifact was used in the wrong conditioning mode."""


class DataError(MotionTapeError):
    """Input data violates a precondition."""


class ShapeError(DataError):
    """Array shapes or channel manifests do not line up."""


class ArityError(DataError):
    """Too few operands for the operation (e.g. empty sample sets)."""


class DegenerateDataError(DataError):
    """Data lacks the variation the operation needs (single label/subject)."""


class AlignmentError(DataError):
    """Two streams have no overlap after offset removal."""


class NotApplicableError(DataError):
    """The check is only defined for a different kind of dataset."""


class LeakageError(MotionTapeError):
    """Test-partition samples reached a training input."""


class TrainingFailure(MotionTapeError):
    """Training diverged; carries the epoch at which the loss went non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
