"""Exception hierarchy.

Every error raised on bad input derives from ``ErgosegError`` so the CLI can
map it to exit status 2; ``NumericFailure`` subclasses map to exit status 3.
"""


class ErgosegError(Exception):
    """Base class for input and usage errors."""


class NumericFailure(ErgosegError):
    """Base class for numeric failures during training."""


# skeleton-io
class MalformedHierarchy(ErgosegError):
    pass


class MotionWidthMismatch(ErgosegError):
    pass


class FrameCountMismatch(ErgosegError):
    pass


class RowWidthMismatch(ErgosegError):
    pass


class NonMonotoneFrameIndex(ErgosegError):
    pass


class EmptySequence(ErgosegError):
    pass


class TooManyInvalidRows(ErgosegError):
    pass


# kinematics
class DegenerateFrame(ErgosegError):
    pass


class DegenerateProjection(ErgosegError):
    pass


class MissingJoint(ErgosegError):
    pass


# reba
class TableFormatError(ErgosegError):
    pass


class ActionMissing(ErgosegError):
    pass


class TooShort(ErgosegError):
    pass


# labels
class UnknownLabel(ErgosegError):
    pass


class AnnotationError(ErgosegError):
    pass


class OverlapError(AnnotationError):
    pass


class GapError(AnnotationError):
    pass


class UnsortedError(AnnotationError):
    pass


class EmptyInput(ErgosegError):
    pass


class MissingRisk(ErgosegError):
    pass


# features
class BadMagic(ErgosegError):
    pass


class VersionUnsupported(ErgosegError):
    pass


class TruncatedPayload(ErgosegError):
    pass


class TooFewVideos(ErgosegError):
    pass


class InvalidFeatures(ErgosegError):
    pass


# tcn
class ShapeMismatch(ErgosegError):
    pass


class SequenceTooShort(ErgosegError):
    pass


class DimsMismatch(ErgosegError):
    pass


class WindowTooSmall(ErgosegError):
    pass


class NonFiniteLoss(NumericFailure):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


# metrics
class LengthMismatch(ErgosegError):
    pass


class BadTau(ErgosegError):
    pass
