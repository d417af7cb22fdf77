"""Exception hierarchy.

Everything raised on purpose derives from :class:`ChunkpackError`.
:class:`FormatError` groups the "this is not a valid file / frame" family,
which the command line maps to a single exit code.
"""


class ChunkpackError(Exception):
    pass


class FormatError(ChunkpackError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class InvalidHeader(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class InvalidMetadata(FormatError):
    pass


class MetadataChecksumMismatch(FormatError):
    pass


class TruncatedOffsets(FormatError):
    pass


class CorruptFrame(FormatError):
    pass


class CorruptBlock(CorruptFrame):
    """A block's token stream does not decode to the expected length."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class ChecksumMismatch(ChunkpackError):
    """Stored and recomputed checksums of a chunk frame differ."""

    def __init__(self, chunk):
        super().__init__(f"checksum mismatch in chunk {chunk}")
        self.chunk = chunk


class ChunkTooLarge(ChunkpackError, ValueError):
    pass


class SinkNotSeekable(ChunkpackError):
    pass


class NoOffsets(ChunkpackError):
    pass


class NoAppendSpace(ChunkpackError):
    pass


class AppendToPartialChunk(ChunkpackError):
    pass


class InvalidDtype(ChunkpackError, ValueError):
    pass


class DescriptorMismatch(ChunkpackError, ValueError):
    pass


class NotAnArrayFile(ChunkpackError):
    pass


class EmptySamples(ChunkpackError, ValueError):
    pass
