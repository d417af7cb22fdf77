"""Streaming pack / unpack / append / info over the container layout.

A file is laid out as::

    header(32) [metadata section] [offsets] (chunk frame [checksum]) * nchunks

Chunks are compressed one at a time, so memory use stays a small multiple of
the chunk size no matter how large the input is.  Offsets are written as
placeholders and back-patched once every chunk has been emitted, which needs a
seekable sink.
"""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterator

import numpy as np

from . import format as fmt
from .codec import (
    FRAME_HEADER_LENGTH,
    CodecParams,
    compress_chunk_parts,
    decompress_chunk_into,
    default_threads,
    read_frame_header,
)
from .errors import (
    AppendToPartialChunk,
    ChecksumMismatch,
    ChunkpackError,
    ChunkTooLarge,
    CorruptFrame,
    InvalidMetadata,
    NoAppendSpace,
    NoOffsets,
    SinkNotSeekable,
    TruncatedFile,
)

log = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 2**20
DEFAULT_CHECKSUM = "adler32"


def default_max_app_chunks(nchunks: int) -> int:
    return min(10 * nchunks, fmt.MAX_CHUNKS - nchunks)


def default_metadata_alloc(used: int) -> int:
    return min(10 * used, fmt.MAX_META_SIZE)


@dataclass(frozen=True)
class PackArgs:
    level: int = 7
    shuffle: bool = True
    typesize: int = 8
    n_threads: int = field(default_factory=default_threads)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    checksum: str | int = DEFAULT_CHECKSUM
    offsets: bool = True
    max_app_chunks: int | None = None
    metadata: bytes | None = None
    metadata_alloc: int | None = None

    def __post_init__(self):
        if self.chunk_size > fmt.MAX_CHUNK_SIZE:
            raise ChunkTooLarge(f"chunk_size {self.chunk_size} exceeds 2**31-1")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        fmt.checksum_id(self.checksum)
        self.codec_params()

    @property
    def checksum_id(self) -> int:
        return fmt.checksum_id(self.checksum)

    def codec_params(self) -> CodecParams:
        return CodecParams(level=self.level, shuffle=self.shuffle, typesize=self.typesize,
                           n_threads=self.n_threads)


@dataclass
class FileInfo:
    header: fmt.FileHeader
    metadata: bytes | None
    metadata_alloc: int
    offsets: list[int] | None
    chunk_sizes: list[int]
    file_size: int

    @property
    def nbytes(self) -> int:
        h = self.header
        return (h.nchunks - 1) * h.chunk_size + h.last_chunk

    @property
    def ratio(self) -> float:
        return self.nbytes / self.file_size


# -- stream helpers ----------------------------------------------------------

def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if data is None or len(data) != n:
        got = 0 if data is None else len(data)
        raise TruncatedFile(f"{what}: expected {n} bytes, got {got}")
    return data


def _fill(stream: BinaryIO, view: memoryview) -> int:
    """Read into ``view`` until it is full or the stream ends."""
    total = 0
    readinto = getattr(stream, "readinto", None)
    while total < len(view):
        if readinto is not None:
            got = readinto(view[total:])
        else:
            data = stream.read(len(view) - total)
            got = len(data) if data else 0
            view[total:total + got] = data or b""
        if not got:
            break
        total += got
    return total


def _seekable(stream) -> bool:
    try:
        return stream.seekable()
    except (AttributeError, ValueError):
        return False


def _remaining(stream: BinaryIO) -> int:
    if not _seekable(stream):
        raise ValueError("source length unknown and source is not seekable; pass nbytes")
    pos = stream.tell()
    end = stream.seek(0, io.SEEK_END)
    stream.seek(pos)
    return end - pos


def _chunk_count(nbytes: int, chunk_size: int) -> tuple[int, int]:
    if nbytes == 0:
        return 1, 0
    nchunks = -(-nbytes // chunk_size)
    return nchunks, nbytes - (nchunks - 1) * chunk_size


class BufferReader(io.RawIOBase):
    """Read-only stream over an in-memory buffer, without copying it."""

    def __init__(self, data):
        self._view = memoryview(data).cast("B")
        self._pos = 0

    def readable(self):
        return True

    def seekable(self):
        return True

    def tell(self):
        return self._pos

    def seek(self, offset, whence=io.SEEK_SET):
        base = {io.SEEK_SET: 0, io.SEEK_CUR: self._pos, io.SEEK_END: len(self._view)}[whence]
        self._pos = max(0, base + offset)
        return self._pos

    def take(self, n: int) -> memoryview:
        """Up to ``n`` bytes as a view into the underlying buffer."""
        chunk = self._view[self._pos:self._pos + n]
        self._pos += len(chunk)
        return chunk

    def readinto(self, b):
        chunk = self._view[self._pos:self._pos + len(b)]
        n = len(chunk)
        memoryview(b).cast("B")[:n] = chunk
        self._pos += n
        return n


# -- layout reading ----------------------------------------------------------

@dataclass
class _Prefix:
    header: fmt.FileHeader
    metadata: fmt.MetadataSection | None
    offsets: list[int] | None
    start: int
    offsets_pos: int
    data_pos: int


def _read_prefix(source: BinaryIO) -> _Prefix:
    start = source.tell() if _seekable(source) else 0
    raw = source.read(fmt.HEADER_LENGTH) or b""
    header = fmt.decode_header(raw)
    pos = fmt.HEADER_LENGTH
    meta = None
    if header.metadata_present:
        mh = _read_exact(source, fmt.METADATA_HEADER_LENGTH, "metadata header")
        _, alloc, cid = fmt.METADATA_HEADER.unpack(mh)
        if cid >= len(fmt.CHECKSUM_SIZES):
            raise InvalidMetadata(f"checksum id {cid} out of range")
        rest = fmt.metadata_section_size(alloc, cid) - fmt.METADATA_HEADER_LENGTH
        meta = fmt.decode_metadata_section(mh + _read_exact(source, rest, "metadata"))
        pos += meta.encoded_size
    offsets = None
    offsets_pos = pos
    if header.offsets_present:
        nslots = header.total_slots
        raw = source.read(nslots * fmt.OFFSET_SIZE) or b""
        offsets = fmt.decode_offsets(raw, nslots)
        pos += nslots * fmt.OFFSET_SIZE
    return _Prefix(header, meta, offsets, start, start + offsets_pos, start + pos)


def _iter_frames(source: BinaryIO, prefix: _Prefix) -> Iterator[tuple[int, bytes, int]]:
    """Yield ``(index, frame, expected_nbytes)`` with checksums already verified."""
    h = prefix.header
    cid = h.checksum_id
    csize = fmt.checksum_size(cid)
    file_end = None
    if prefix.offsets is not None and _seekable(source):
        here = source.tell()
        file_end = source.seek(0, io.SEEK_END)
        source.seek(here)
    if prefix.offsets is not None and prefix.offsets[0] != prefix.data_pos - prefix.start:
        raise CorruptFrame("offsets table does not point at the first chunk")
    for i in range(h.nchunks):
        expected = h.chunk_size if i < h.nchunks - 1 else h.last_chunk
        extent = None
        if prefix.offsets is not None:
            if i + 1 < h.nchunks:
                extent = prefix.offsets[i + 1] - prefix.offsets[i] - csize
            elif file_end is not None:
                extent = file_end - (prefix.start + prefix.offsets[i]) - csize
        if extent is not None:
            if not FRAME_HEADER_LENGTH <= extent <= _max_frame(expected):
                raise CorruptFrame(f"chunk {i}: implausible frame extent {extent}")
            frame = _read_exact(source, extent, f"chunk {i}")
        else:
            head = _read_exact(source, FRAME_HEADER_LENGTH, f"chunk {i} header")
            cbytes = read_frame_header(head).cbytes
            if not FRAME_HEADER_LENGTH <= cbytes <= _max_frame(expected):
                raise CorruptFrame(f"chunk {i}: implausible frame length {cbytes}")
            frame = head + _read_exact(source, cbytes - FRAME_HEADER_LENGTH, f"chunk {i}")
        if csize:
            stored = _read_exact(source, csize, f"chunk {i} checksum")
            if stored != fmt.compute_checksum(cid, frame):
                raise ChecksumMismatch(i)
        yield i, frame, expected


def _max_frame(nbytes: int) -> int:
    # block_size >= 1, so at most one 4 byte index entry per byte
    return FRAME_HEADER_LENGTH + 5 * nbytes


def _check_frame(i: int, frame: bytes, expected: int) -> None:
    fh = read_frame_header(frame)
    if fh.nbytes != expected:
        raise CorruptFrame(f"chunk {i}: frame holds {fh.nbytes} bytes, header expects {expected}")


# -- chunk writing -----------------------------------------------------------

def _write_chunks(source: BinaryIO, sink: BinaryIO, nbytes: int, chunk_size: int,
                  params: CodecParams, cid: int, base: int) -> list[int]:
    """Compress ``nbytes`` from source into sink; returns chunk offsets rel. to base."""
    offsets = []
    direct = isinstance(source, BufferReader)
    if not direct:
        view = memoryview(bytearray(min(chunk_size, nbytes) or 0))
    left = nbytes
    first = True
    while left or first:
        first = False
        n = min(chunk_size, left)
        if direct:
            data = source.take(n)
            got = len(data)
        else:
            data = view[:n]
            got = _fill(source, data)
        if got != n:
            raise ChunkpackError(f"source ended early: expected {n} more bytes, got {got}")
        parts = compress_chunk_parts(params, data)
        offsets.append(sink.tell() - base if _seekable(sink) else -1)
        for part in parts:
            sink.write(part)
        if cid:
            sink.write(fmt.checksum_parts(cid, parts))
        left -= n
    return offsets


# -- public operations -------------------------------------------------------

def pack(source: BinaryIO, sink: BinaryIO, args: PackArgs | None = None,
         nbytes: int | None = None) -> FileInfo:
    """Compress everything readable from ``source`` into ``sink``.

    ``nbytes`` is the number of bytes to take from source; when omitted the
    source must be seekable so its remaining length can be measured.
    """
    args = args or PackArgs()
    if nbytes is None:
        nbytes = _remaining(source)
    if args.offsets and not _seekable(sink):
        raise SinkNotSeekable("writing offsets needs a seekable sink")
    nchunks, last_chunk = _chunk_count(nbytes, args.chunk_size)
    max_app = args.max_app_chunks
    if max_app is None:
        max_app = default_max_app_chunks(nchunks) if args.offsets else 0
    cid = args.checksum_id
    meta = None
    if args.metadata is not None:
        alloc = args.metadata_alloc
        if alloc is None:
            alloc = default_metadata_alloc(len(args.metadata))
        meta = fmt.MetadataSection(bytes(args.metadata), alloc, cid)
    header = fmt.FileHeader(
        chunk_size=args.chunk_size,
        last_chunk=last_chunk,
        nchunks=nchunks,
        max_app_chunks=max_app,
        typesize=args.typesize,
        checksum_id=cid,
        offsets_present=args.offsets,
        metadata_present=meta is not None,
    )
    base = sink.tell() if _seekable(sink) else 0
    sink.write(fmt.encode_header(header))
    if meta is not None:
        sink.write(fmt.encode_metadata_section(meta))
    offsets_pos = sink.tell() if args.offsets else None
    if args.offsets:
        sink.write(fmt.encode_offsets([fmt.UNUSED_OFFSET] * header.total_slots))
    log.debug("packing %d bytes into %d chunks of %d", nbytes, nchunks, args.chunk_size)
    chunk_offsets = _write_chunks(source, sink, nbytes, args.chunk_size,
                                  args.codec_params(), cid, base)
    end = sink.tell() if _seekable(sink) else None
    offsets = None
    if args.offsets:
        offsets = chunk_offsets + [fmt.UNUSED_OFFSET] * max_app
        sink.seek(offsets_pos)
        sink.write(fmt.encode_offsets(offsets))
        sink.seek(end)
    csize = fmt.checksum_size(cid)
    sizes = [b - a - csize for a, b in zip(chunk_offsets, chunk_offsets[1:] + [end - base])] \
        if end is not None else []
    return FileInfo(
        header=header,
        metadata=meta.payload if meta else None,
        metadata_alloc=meta.alloc_size if meta else 0,
        offsets=offsets,
        chunk_sizes=sizes,
        file_size=(end - base) if end is not None else 0,
    )


def unpack(source: BinaryIO, sink: BinaryIO, n_threads: int = 1) -> tuple[bytes | None, int]:
    """Decompress a container from ``source`` into ``sink``.

    Every chunk's checksum is checked before it is decompressed.  Returns the
    metadata payload (``None`` if the file has none) and the byte count written.
    """
    prefix = _read_prefix(source)
    out = np.empty(prefix.header.chunk_size if prefix.header.nchunks > 1
                   else prefix.header.last_chunk, dtype=np.uint8)
    total = 0
    for i, frame, expected in _iter_frames(source, prefix):
        _check_frame(i, frame, expected)
        n = decompress_chunk_into(frame, out, n_threads=n_threads)
        sink.write(out[:n])
        total += n
    return (prefix.metadata.payload if prefix.metadata else None), total


def unpack_into(source: BinaryIO, out, n_threads: int = 1) -> tuple[fmt.FileHeader, bytes | None]:
    """Decompress every chunk straight into the writable buffer ``out``.

    ``out`` must hold at least the container's uncompressed size; nothing is
    staged in between.  Returns the header and metadata payload.
    """
    prefix = _read_prefix(source)
    h = prefix.header
    total = (h.nchunks - 1) * h.chunk_size + h.last_chunk
    dst = memoryview(out).cast("B")
    if len(dst) < total:
        raise ValueError(f"output buffer holds {len(dst)} bytes, container has {total}")
    for i, frame, expected in _iter_frames(source, prefix):
        _check_frame(i, frame, expected)
        start = i * h.chunk_size
        decompress_chunk_into(frame, dst[start:start + expected], n_threads=n_threads)
    return h, (prefix.metadata.payload if prefix.metadata else None)


def read_metadata(source: BinaryIO) -> tuple[fmt.FileHeader, bytes | None]:
    prefix = _read_prefix(source)
    return prefix.header, (prefix.metadata.payload if prefix.metadata else None)


def append(file: BinaryIO, source: BinaryIO, nbytes: int | None = None,
           params: CodecParams | None = None) -> int:
    """Append the bytes of ``source`` to the container in ``file``.

    Uses the pre-allocated offset slots; the header is rewritten in place.
    ``params`` defaults to level 7 with the file's typesize.  Returns the new
    chunk count.
    """
    if not _seekable(file):
        raise SinkNotSeekable("append needs a seekable read-write file")
    if nbytes is None:
        nbytes = _remaining(source)
    start = file.tell()
    prefix = _read_prefix(file)
    h = prefix.header
    if not h.offsets_present:
        raise NoOffsets("file was written without an offsets section; cannot append")
    if nbytes == 0:
        return h.nchunks
    if h.last_chunk != h.chunk_size:
        raise AppendToPartialChunk(
            f"last chunk holds {h.last_chunk} of {h.chunk_size} bytes; "
            "appending needs a full final chunk")
    need, last_chunk = _chunk_count(nbytes, h.chunk_size)
    if need > h.max_app_chunks:
        raise NoAppendSpace(f"appending needs {need} chunk slots, {h.max_app_chunks} left")
    if params is None:
        params = CodecParams(typesize=h.typesize)
    elif params.typesize != h.typesize:
        params = replace(params, typesize=h.typesize)

    file.seek(0, io.SEEK_END)
    new = _write_chunks(source, file, nbytes, h.chunk_size, params, h.checksum_id, start)
    offsets = list(prefix.offsets)
    offsets[h.nchunks:h.nchunks + need] = new
    file.seek(prefix.offsets_pos)
    file.write(fmt.encode_offsets(offsets))
    updated = replace(h, nchunks=h.nchunks + need, last_chunk=last_chunk,
                      max_app_chunks=h.max_app_chunks - need)
    file.seek(start)
    file.write(fmt.encode_header(updated))
    file.seek(0, io.SEEK_END)
    return updated.nchunks


def info(source: BinaryIO) -> FileInfo:
    """Describe a container without decompressing any chunk."""
    start = source.tell() if _seekable(source) else 0
    prefix = _read_prefix(source)
    h = prefix.header
    csize = fmt.checksum_size(h.checksum_id)
    sizes = []
    if prefix.offsets is not None and _seekable(source):
        end = source.seek(0, io.SEEK_END)
        present = prefix.offsets[:h.nchunks] + [end - start]
        sizes = [b - a - csize for a, b in zip(present, present[1:])]
    else:
        for i in range(h.nchunks):
            head = _read_exact(source, FRAME_HEADER_LENGTH, f"chunk {i} header")
            cbytes = read_frame_header(head).cbytes
            sizes.append(cbytes)
            skip = cbytes - FRAME_HEADER_LENGTH + csize
            if _seekable(source):
                source.seek(skip, io.SEEK_CUR)
            else:
                _read_exact(source, skip, f"chunk {i}")
        end = (source.tell() if _seekable(source) else
               prefix.data_pos + sum(sizes) + csize * h.nchunks)
    return FileInfo(
        header=h,
        metadata=prefix.metadata.payload if prefix.metadata else None,
        metadata_alloc=prefix.metadata.alloc_size if prefix.metadata else 0,
        offsets=prefix.offsets,
        chunk_sizes=sizes,
        file_size=end - start,
    )


# -- conveniences ------------------------------------------------------------

def pack_bytes(data, args: PackArgs | None = None) -> bytes:
    sink = io.BytesIO()
    reader = BufferReader(data)
    pack(reader, sink, args, nbytes=len(reader._view))
    return sink.getvalue()


def unpack_bytes(blob) -> tuple[bytes, bytes | None]:
    sink = io.BytesIO()
    meta, _ = unpack(BufferReader(blob), sink)
    return sink.getvalue(), meta


def pack_file(in_path, out_path, args: PackArgs | None = None) -> FileInfo:
    with open(in_path, "rb") as src, open(out_path, "wb") as dst:
        return pack(src, dst, args)


def unpack_file(in_path, out_path, n_threads: int = 1) -> tuple[bytes | None, int]:
    with open(in_path, "rb") as src, open(out_path, "wb") as dst:
        return unpack(src, dst, n_threads=n_threads)


def append_file(path, in_path, params: CodecParams | None = None) -> int:
    with open(path, "r+b") as f, open(in_path, "rb") as src:
        return append(f, src, params=params)


def file_info(path) -> FileInfo:
    with open(path, "rb") as f:
        return info(f)


def sync(stream) -> None:
    """Flush Python buffers and ask the OS to commit the file to storage."""
    stream.flush()
    os.fsync(stream.fileno())
