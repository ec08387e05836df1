"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`EpsnetError`,
which lets the CLI map library failures to exit code 1 without swallowing
genuine programming errors.
"""


class EpsnetError(Exception):
    """Base class for all package errors."""


class NormalizationError(EpsnetError, ValueError):
    """A vector is too close to zero to be normalized."""


class DimensionMismatchError(EpsnetError, ValueError):
    """Embeddings of different dimensions were mixed."""


class EmptyStreamError(EpsnetError, ValueError):
    """An operation that needs at least one frame received none."""


class StreamCorruptError(EpsnetError, ValueError):
    def __init__(self, message, frame_id=None):
        super().__init__(message)
        self.frame_id = frame_id


class IndexMismatchError(EpsnetError, ValueError):
    """A keyframe index references frames that are not in the stream."""


class ReRankCoverageError(EpsnetError, KeyError):
    def __init__(self, frame_id):
        super().__init__(f"no second-stage embedding for frame_id {frame_id}")
        self.frame_id = frame_id

    def __str__(self):
        return self.args[0]


class TrainingDivergedError(EpsnetError, FloatingPointError):
    def __init__(self, epoch):
        super().__init__(f"adapter loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class GeometryInfeasibleError(EpsnetError, RuntimeError):
    """Rejection sampling could not place the requested event directions."""


class FormatError(EpsnetError, ValueError):
    """A binary file has the wrong magic number, version or layout."""


class TruncationError(FormatError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CorruptEmbeddingError(FormatError):
    def __init__(self, message, frame_id):
        super().__init__(message)
        self.frame_id = frame_id


class AnnotationError(EpsnetError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
