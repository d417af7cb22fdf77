"""Blocked, shuffled LZ77 codec for one chunk.

A chunk is split into cache-sized blocks.  Each block is byte-shuffled
(optional), then LZ-compressed independently; blocks that do not shrink are
kept verbatim.  Blocks are distributed over a thread pool, and because every
block is encoded in isolation the frame bytes never depend on the number of
threads.

Frame layout (little-endian)::

    0      codec version (1)
    1      flags: bit0 shuffled, bit1 stored raw
    2      typesize
    3      reserved, zero
    4-7    nbytes      uncompressed length
    8-11   block_size
    12-15  cbytes      total frame length, header included
    16-    block index: one uint32 per block, the stored size of that block
           block payloads, concatenated

A block whose stored size equals its uncompressed length is raw.  When the
whole chunk would not shrink, the frame is ``stored raw``: the header is
followed by the unshuffled input and there is no block index.

Block token stream.  A control byte ``t`` starts every token:

* ``t < 32``: literal run, the next ``t + 1`` bytes are copied.
* ``t >= 32``: match.  ``L = t >> 5``; length is ``L + 2``, and when ``L == 7``
  length bytes follow, each added to the length, a 255 meaning another length
  byte follows.  Then one byte ``o``; the match distance is
  ``((t & 31) << 8 | o) + 1`` (1..8192) back from the current output position.
"""

from __future__ import annotations

import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ChunkTooLarge, CorruptBlock, CorruptFrame

CODEC_VERSION = 1
FRAME_HEADER_LENGTH = 16
MAX_NBYTES = 2**31 - 1
MAX_LEVEL = 9

FLAG_SHUFFLED = 0x01
FLAG_STORED_RAW = 0x02

L1_CACHE = 32 * 1024
L2_CACHE = 256 * 1024

_FRAME_HEADER = struct.Struct("<BBBBIII")

_DECODE_ERRORS = {
    _kernels.ERR_TRUNCATED: "truncated token stream",
    _kernels.ERR_DISTANCE: "match distance reaches before block start",
    _kernels.ERR_OVERRUN: "token overruns the block length",
    _kernels.ERR_TRAILING: "trailing bytes after the last token",
}


def default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class CodecParams:
    """Everything that decides the compressed bytes, plus the worker count.

    ``shuffle`` only takes effect for ``typesize > 1``.  ``block_size`` is
    derived from the level and cache sizes unless given.
    """

    level: int = 7
    shuffle: bool = True
    typesize: int = 8
    block_size: int | None = None
    n_threads: int = field(default_factory=default_threads)
    l1: int = L1_CACHE
    l2: int = L2_CACHE

    def __post_init__(self):
        if not 0 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {self.level}")
        if not 1 <= self.typesize <= 255:
            raise ValueError(f"typesize must be in [1, 255], got {self.typesize}")
        if self.n_threads < 1:
            raise ValueError(f"n_threads must be >= 1, got {self.n_threads}")
        if self.block_size is not None:
            if self.block_size < 1:
                raise ValueError("block_size must be positive")
            if self.shuffled and self.block_size % self.typesize:
                raise ValueError("block_size must be a multiple of typesize when shuffling")

    @property
    def shuffled(self) -> bool:
        return self.shuffle and self.typesize > 1

    def block_size_for(self, nbytes: int) -> int:
        if self.block_size is not None:
            return self.block_size
        return block_size_for(self.level, self.typesize, nbytes, self.l1, self.l2)


@dataclass(frozen=True)
class FrameHeader:
    codec_version: int
    flags: int
    typesize: int
    nbytes: int
    block_size: int
    cbytes: int

    @property
    def shuffled(self) -> bool:
        return bool(self.flags & FLAG_SHUFFLED)

    @property
    def stored_raw(self) -> bool:
        return bool(self.flags & FLAG_STORED_RAW)

    @property
    def nblocks(self) -> int:
        return -(-self.nbytes // self.block_size) if self.nbytes else 0


def read_frame_header(frame) -> FrameHeader:
    if len(frame) < FRAME_HEADER_LENGTH:
        raise CorruptFrame(f"frame shorter than its {FRAME_HEADER_LENGTH} byte header")
    version, flags, typesize, reserved, nbytes, block_size, cbytes = \
        _FRAME_HEADER.unpack_from(frame, 0)
    if version != CODEC_VERSION:
        raise CorruptFrame(f"unknown codec version {version}")
    if flags & ~(FLAG_SHUFFLED | FLAG_STORED_RAW) or reserved:
        raise CorruptFrame(f"invalid flags/reserved byte {flags:#04x}/{reserved:#04x}")
    if typesize == 0 or block_size == 0:
        raise CorruptFrame("zero typesize or block_size")
    if nbytes > MAX_NBYTES:
        raise CorruptFrame(f"nbytes {nbytes} exceeds 2**31-1")
    if flags & FLAG_SHUFFLED and block_size % typesize:
        raise CorruptFrame("shuffled frame with block_size not a multiple of typesize")
    return FrameHeader(version, flags, typesize, nbytes, block_size, cbytes)


def frame_bound(nbytes: int, block_size: int) -> int:
    """Upper bound on the frame length for ``nbytes`` of input."""
    return FRAME_HEADER_LENGTH + nbytes + 4 * (-(-nbytes // block_size))


# -- filters -----------------------------------------------------------------

def _as_u8(buf) -> np.ndarray:
    if isinstance(buf, np.ndarray):
        return buf.reshape(-1, order="A").view(np.uint8)
    return np.frombuffer(buf, dtype=np.uint8)


def shuffle(typesize: int, buf) -> bytes:
    """Group byte i of every ``typesize``-byte element together.

    >>> shuffle(2, b"a1b2c3")
    b'abc123'
    """
    if typesize < 1:
        raise ValueError("typesize must be >= 1")
    src = _as_u8(buf)
    dst = np.empty_like(src)
    _kernels.shuffle_into(src, 0, src.size, typesize, dst, 0)
    return dst.tobytes()


def unshuffle(typesize: int, buf) -> bytes:
    if typesize < 1:
        raise ValueError("typesize must be >= 1")
    src = _as_u8(buf)
    dst = np.empty_like(src)
    _kernels.unshuffle_into(src, 0, src.size, typesize, dst, 0)
    return dst.tobytes()


def block_size_for(level: int, typesize: int, nbytes: int,
                   l1: int = L1_CACHE, l2: int = L2_CACHE) -> int:
    """Block size fitting L1 (levels up to 6) or L2 (above), in whole elements."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in [0, {MAX_LEVEL}]")
    target = l1 if level <= 6 else l2
    size = min(nbytes, target)
    return max(typesize, size - size % typesize)


# -- LZ ------------------------------------------------------------------------

def _hash_log(level: int) -> int:
    return 12 + min(level, 4)


def _skip_trigger(level: int) -> int:
    # after 2**trigger consecutive misses the search stride grows by one
    return 4 + (level + 1) // 3


def lz_compress_block(level: int, block) -> bytes | None:
    """LZ-compress one block; ``None`` when the result would not be shorter."""
    src = _as_u8(block)
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in [0, {MAX_LEVEL}]")
    if level == 0 or src.size == 0:
        return None
    dst = np.empty(src.size, dtype=np.uint8)
    htab = np.full(1 << _hash_log(level), -1, dtype=np.int64)
    n = _kernels.lz_compress(src, 0, src.size, dst, 0, htab, 0, _hash_log(level),
                             _skip_trigger(level))
    if n < 0:
        return None
    return dst[:n].tobytes()


def lz_decompress_block(stream, expected_len: int) -> bytes:
    src = _as_u8(stream)
    dst = np.empty(expected_len, dtype=np.uint8)
    rc = _kernels.lz_decompress(src, 0, src.size, dst, 0, expected_len)
    if rc != _kernels.OK:
        raise CorruptBlock(_DECODE_ERRORS[rc])
    return dst.tobytes()


# -- thread pool -------------------------------------------------------------

_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(n: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(n)
        if pool is None:
            pool = _pools[n] = ThreadPoolExecutor(n, thread_name_prefix="chunkpack")
        return pool


def _spans(nblocks: int, n_threads: int) -> list[tuple[int, int]]:
    n = max(1, min(n_threads, nblocks))
    edges = [nblocks * i // n for i in range(n + 1)]
    return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


def _run(spans, fn):
    if len(spans) <= 1:
        for a, b in spans:
            fn(a, b)
        return
    for f in [_pool(len(spans)).submit(fn, a, b) for a, b in spans]:
        f.result()


# -- chunks ------------------------------------------------------------------

_local = threading.local()


def _workspace(name: str, size: int, fill=None, dtype=np.uint8) -> np.ndarray:
    """Per-thread reusable array of at least ``size`` elements (first ``size`` returned)."""
    arr = getattr(_local, name, None)
    if arr is None or arr.size < size:
        arr = np.empty(size, dtype=dtype)
        setattr(_local, name, arr)
    arr = arr[:size]
    if fill is not None:
        arr.fill(fill)
    return arr


def compress_chunk_parts(params: CodecParams, buf) -> list:
    """Like :func:`compress_chunk` but returns the frame as a list of buffers.

    A stored-raw frame is ``[header, input]`` with the input not copied, so
    writers can hand both pieces to the sink directly.
    """
    src = _as_u8(buf)
    nbytes = src.size
    if nbytes > MAX_NBYTES:
        raise ChunkTooLarge(f"chunk of {nbytes} bytes exceeds 2**31-1")
    block_size = params.block_size_for(nbytes)
    nblocks = -(-nbytes // block_size) if nbytes else 0
    shuffled = params.shuffled
    use_lz = params.level > 0

    if use_lz:
        sizes = np.empty(nblocks, dtype=np.int64)
        out = _workspace("out", nbytes)
        hash_log = _hash_log(params.level)
        trigger = _skip_trigger(params.level)

        def work(first, stop):
            scratch = _workspace("scratch", block_size)
            htab = _workspace("htab", 1 << hash_log, fill=-1, dtype=np.int64)
            _kernels.compress_blocks(src, nbytes, block_size, params.typesize, shuffled,
                                     first, stop, scratch, out, sizes, htab, hash_log,
                                     trigger, use_lz)

        _run(_spans(nblocks, params.n_threads), work)
        payload = 4 * nblocks + int(sizes.sum())
    else:
        payload = nbytes

    if nbytes == 0 or payload >= nbytes:
        flags = FLAG_STORED_RAW if nbytes else 0
        cbytes = FRAME_HEADER_LENGTH + nbytes
        header = _FRAME_HEADER.pack(CODEC_VERSION, flags, params.typesize, 0, nbytes,
                                    block_size, cbytes)
        return [header, src]

    flags = FLAG_SHUFFLED if shuffled else 0
    cbytes = FRAME_HEADER_LENGTH + payload
    frame = np.empty(cbytes, dtype=np.uint8)
    frame[:FRAME_HEADER_LENGTH] = np.frombuffer(
        _FRAME_HEADER.pack(CODEC_VERSION, flags, params.typesize, 0, nbytes, block_size,
                           cbytes), dtype=np.uint8)
    index_end = FRAME_HEADER_LENGTH + 4 * nblocks
    frame[FRAME_HEADER_LENGTH:index_end] = sizes.astype("<u4").view(np.uint8)
    _kernels.gather_blocks(out, sizes, block_size, frame, index_end)
    return [frame]


def compress_chunk(params: CodecParams, buf) -> bytes:
    """Compress one chunk into a self-describing frame."""
    return b"".join(compress_chunk_parts(params, buf))


def decompress_chunk(frame, n_threads: int = 1) -> bytes:
    header = read_frame_header(frame)
    out = np.empty(header.nbytes, dtype=np.uint8)
    decompress_chunk_into(frame, out, n_threads=n_threads)
    return out.tobytes()


def decompress_chunk_into(frame, out, n_threads: int = 1) -> int:
    """Decompress ``frame`` into the start of the writable buffer ``out``.

    Returns the number of bytes written.  Raises :class:`CorruptFrame` when
    the header disagrees with the frame length or the block index, and
    :class:`CorruptBlock` when a block fails to decode.
    """
    header = read_frame_header(frame)
    if header.cbytes != len(frame):
        raise CorruptFrame(f"frame says cbytes={header.cbytes} but is {len(frame)} bytes")
    dst = _as_u8(out)
    nbytes = header.nbytes
    if dst.size < nbytes:
        raise ValueError(f"output buffer holds {dst.size} bytes, frame needs {nbytes}")
    src = _as_u8(frame)

    if header.stored_raw or nbytes == 0:
        if header.cbytes != FRAME_HEADER_LENGTH + nbytes:
            raise CorruptFrame("stored frame length does not match nbytes")
        dst[:nbytes] = src[FRAME_HEADER_LENGTH:]
        return nbytes

    nblocks = header.nblocks
    block_size = header.block_size
    index_end = FRAME_HEADER_LENGTH + 4 * nblocks
    if index_end > header.cbytes:
        raise CorruptFrame("block index runs past the end of the frame")
    sizes = src[FRAME_HEADER_LENGTH:index_end].view("<u4").astype(np.int64)
    lengths = np.full(nblocks, block_size, dtype=np.int64)
    lengths[-1] = nbytes - (nblocks - 1) * block_size
    if (sizes < 1).any() or (sizes > lengths).any():
        raise CorruptFrame("block index entry out of range")
    if index_end + int(sizes.sum()) != header.cbytes:
        raise CorruptFrame("block index does not add up to the frame length")
    starts = np.empty(nblocks, dtype=np.int64)
    starts[0] = index_end
    np.cumsum(sizes[:-1], out=starts[1:])
    starts[1:] += index_end

    status = np.zeros(nblocks, dtype=np.int64)

    def work(first, stop):
        scratch = np.empty(block_size, dtype=np.uint8)
        _kernels.decompress_blocks(src, starts, sizes, nbytes, block_size, header.typesize,
                                   header.shuffled, first, stop, scratch, dst, 0, status)

    _run(_spans(nblocks, n_threads), work)
    bad = np.flatnonzero(status)
    if bad.size:
        b = int(bad[0])
        raise CorruptBlock(f"block {b}: {_DECODE_ERRORS[int(status[b])]}", block=b)
    return nbytes
