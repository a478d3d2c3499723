"""Exception hierarchy shared by the whole engine.

Every error carries an ``exit_code`` so the command line tool can map
failures onto its documented exit-code scheme without inspecting types:
2 usage, 3 I/O, 4 shape/consistency, 5 numeric.
"""


class DyntexError(Exception):
    exit_code = 4


class ShapeError(DyntexError):
    """Operand shapes are incompatible with the requested operation."""

    exit_code = 4


class InvalidShapeError(ShapeError):
    """A shape itself is malformed (wrong rank, non-positive dims)."""


class ConsistencyError(DyntexError):
    """Artifacts disagree with each other or with their own metadata."""

    exit_code = 4


class FormatError(DyntexError):
    """A file does not follow its declared on-disk format."""

    exit_code = 4


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    """Payload ends early; ``offset`` is the byte where reading failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingTensorError(FormatError):
    pass


class MissingMetadataError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


class MissingFrameError(DyntexError):
    """A numbered frame is absent from an otherwise valid sequence."""

    exit_code = 3


class NumericError(DyntexError):
    """Non-finite values where finite ones are required."""

    exit_code = 5


class NonDescentError(DyntexError):
    """The line search was handed a direction that does not descend."""

    exit_code = 5


class LineSearchError(DyntexError):
    """Step bracketing exhausted without an acceptable step."""

    exit_code = 5
