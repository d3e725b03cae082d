"""Exception types shared across the package."""


class FireDetectError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(FireDetectError):
    """Tensor shapes are inconsistent; the message names the offending dimensions."""


class StaleCacheError(FireDetectError):
    """A backward pass was given a missing cache or one from the wrong forward mode."""


class ModelFormatError(FireDetectError):
    """Base class for model-file parsing failures."""


class BadMagicError(ModelFormatError):
    """The file does not start with the expected magic bytes."""


class FormatVersionError(ModelFormatError):
    """The file declares an unsupported format version."""


class TruncatedModelError(ModelFormatError):
    """The file ends before the declared payload is complete."""


class ChecksumError(ModelFormatError):
    """The payload checksum does not match the stored value."""


class PpmError(FireDetectError):
    """Malformed PPM image data."""


class DatasetError(FireDetectError):
    """Dataset loading or splitting cannot proceed."""


class TrainingError(FireDetectError):
    """The optimization loop hit a fatal condition (for example a non-finite loss)."""


class FrameError(FireDetectError):
    """A video frame is malformed or unreadable."""


class OutOfOrderEventError(FireDetectError):
    """A fusion event arrived with a timestamp older than one already processed."""
