"""Byte layouts of the container: file header, metadata section, offsets.

File header, 32 bytes, little-endian::

    0-3    magic b"blpk"
    4      format version (3)
    5      options: bit0 offsets present, bit1 metadata present
    6      checksum id (0 none, 1 adler32, 2 crc32, 3 sha256)
    7      typesize
    8-11   chunk_size      int32
    12-15  last_chunk      int32
    16-23  nchunks         int64
    24-31  max_app_chunks  int64

Metadata section: a 12 byte local header (used_size u32, alloc_size u32,
checksum id u8, three zero bytes), then ``alloc_size`` payload bytes
zero-padded past ``used_size``, then the checksum of the used payload.

Offsets section: one int64 per slot, ``-1`` for slots not yet filled.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    InvalidHeader,
    InvalidMetadata,
    MetadataChecksumMismatch,
    TruncatedFile,
    TruncatedOffsets,
    UnsupportedVersion,
)

MAGIC = b"blpk"
FORMAT_VERSION = 3
EXTENSION = ".blp"

HEADER_LENGTH = 32
METADATA_HEADER_LENGTH = 12
OFFSET_SIZE = 8
UNUSED_OFFSET = -1

MAX_CHUNK_SIZE = 2**31 - 1
MAX_CHUNKS = 2**63 - 1
MAX_META_SIZE = 2**32 - 1

OPT_OFFSETS = 0x01
OPT_METADATA = 0x02

_HEADER = struct.Struct("<4sBBBBiiqq")
METADATA_HEADER = struct.Struct("<IIB3x")


# -- checksums ---------------------------------------------------------------

def _zlib_digest(func):
    return lambda data: struct.pack("<I", func(data) & 0xFFFFFFFF)


CHECKSUM_NONE = 0
CHECKSUM_ADLER32 = 1
CHECKSUM_CRC32 = 2
CHECKSUM_SHA256 = 3

CHECKSUM_NAMES = ("none", "adler32", "crc32", "sha256")
CHECKSUM_SIZES = (0, 4, 4, 32)
_CHECKSUM_FUNCS = (
    lambda data: b"",
    _zlib_digest(zlib.adler32),
    _zlib_digest(zlib.crc32),
    lambda data: hashlib.sha256(data).digest(),
)


def checksum_id(name_or_id) -> int:
    """Resolve a checksum given by name (``"crc32"``) or numeric id."""
    if isinstance(name_or_id, str):
        try:
            return CHECKSUM_NAMES.index(name_or_id.lower())
        except ValueError:
            raise ValueError(
                f"unknown checksum {name_or_id!r}, expected one of {CHECKSUM_NAMES}"
            ) from None
    if name_or_id not in range(len(CHECKSUM_NAMES)):
        raise ValueError(f"unknown checksum id {name_or_id!r}")
    return int(name_or_id)


def checksum_size(cid: int) -> int:
    return CHECKSUM_SIZES[cid]


def compute_checksum(cid: int, data) -> bytes:
    return _CHECKSUM_FUNCS[cid](data)


def checksum_parts(cid: int, parts) -> bytes:
    """Checksum of the concatenation of ``parts`` without joining them."""
    if cid == CHECKSUM_NONE:
        return b""
    if cid == CHECKSUM_SHA256:
        h = hashlib.sha256()
        for p in parts:
            h.update(p)
        return h.digest()
    func = zlib.adler32 if cid == CHECKSUM_ADLER32 else zlib.crc32
    value = 1 if cid == CHECKSUM_ADLER32 else 0
    for p in parts:
        value = func(p, value)
    return struct.pack("<I", value & 0xFFFFFFFF)


# -- header ------------------------------------------------------------------

@dataclass(frozen=True)
class FileHeader:
    chunk_size: int
    last_chunk: int
    nchunks: int
    max_app_chunks: int = 0
    typesize: int = 8
    checksum_id: int = CHECKSUM_NONE
    offsets_present: bool = True
    metadata_present: bool = False
    format_version: int = FORMAT_VERSION

    @property
    def options(self) -> int:
        return (OPT_OFFSETS if self.offsets_present else 0) | (
            OPT_METADATA if self.metadata_present else 0
        )

    @property
    def total_slots(self) -> int:
        return self.nchunks + self.max_app_chunks

    def validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise UnsupportedVersion(f"format version {self.format_version}")
        if self.checksum_id not in range(len(CHECKSUM_NAMES)):
            raise InvalidHeader(f"checksum id {self.checksum_id} out of range")
        if not 1 <= self.typesize <= 255:
            raise InvalidHeader(f"typesize {self.typesize} not in [1, 255]")
        if not 1 <= self.chunk_size <= MAX_CHUNK_SIZE:
            raise InvalidHeader(f"chunk_size {self.chunk_size} not in [1, 2**31-1]")
        if not 0 <= self.last_chunk <= self.chunk_size:
            raise InvalidHeader(
                f"last_chunk {self.last_chunk} not in [0, chunk_size={self.chunk_size}]"
            )
        if self.nchunks < 1:
            raise InvalidHeader(f"nchunks {self.nchunks} < 1")
        if self.max_app_chunks < 0:
            raise InvalidHeader(f"max_app_chunks {self.max_app_chunks} < 0")
        if self.nchunks + self.max_app_chunks > MAX_CHUNKS:
            raise InvalidHeader("nchunks + max_app_chunks exceeds 2**63-1")


def encode_header(h: FileHeader) -> bytes:
    h.validate()
    return _HEADER.pack(
        MAGIC,
        h.format_version,
        h.options,
        h.checksum_id,
        h.typesize,
        h.chunk_size,
        h.last_chunk,
        h.nchunks,
        h.max_app_chunks,
    )


def decode_header(b) -> FileHeader:
    """Parse the first 32 bytes of ``b``; anything after them is ignored."""
    if len(b) < HEADER_LENGTH:
        raise TruncatedFile(f"need {HEADER_LENGTH} header bytes, got {len(b)}")
    (magic, version, options, cid, typesize, chunk_size, last_chunk, nchunks,
     max_app) = _HEADER.unpack_from(b, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version}, only {FORMAT_VERSION} is supported")
    if options & ~(OPT_OFFSETS | OPT_METADATA):
        raise InvalidHeader(f"unknown option bits {options:#04x}")
    h = FileHeader(
        chunk_size=chunk_size,
        last_chunk=last_chunk,
        nchunks=nchunks,
        max_app_chunks=max_app,
        typesize=typesize,
        checksum_id=cid,
        offsets_present=bool(options & OPT_OFFSETS),
        metadata_present=bool(options & OPT_METADATA),
        format_version=version,
    )
    h.validate()
    return h


# -- metadata ----------------------------------------------------------------

@dataclass(frozen=True)
class MetadataSection:
    payload: bytes
    alloc_size: int
    checksum_id: int = CHECKSUM_NONE

    @property
    def used_size(self) -> int:
        return len(self.payload)

    @property
    def encoded_size(self) -> int:
        return metadata_section_size(self.alloc_size, self.checksum_id)


def metadata_section_size(alloc_size: int, cid: int) -> int:
    return METADATA_HEADER_LENGTH + alloc_size + CHECKSUM_SIZES[cid]


def encode_metadata_section(m: MetadataSection) -> bytes:
    used = len(m.payload)
    if m.alloc_size > MAX_META_SIZE:
        raise InvalidMetadata(f"alloc_size {m.alloc_size} exceeds uint32")
    if used > m.alloc_size:
        raise InvalidMetadata(f"used_size {used} > alloc_size {m.alloc_size}")
    if m.checksum_id not in range(len(CHECKSUM_NAMES)):
        raise InvalidMetadata(f"checksum id {m.checksum_id} out of range")
    return b"".join((
        METADATA_HEADER.pack(used, m.alloc_size, m.checksum_id),
        bytes(m.payload),
        bytes(m.alloc_size - used),
        compute_checksum(m.checksum_id, bytes(m.payload)),
    ))


def decode_metadata_section(b) -> MetadataSection:
    if len(b) < METADATA_HEADER_LENGTH:
        raise TruncatedFile("metadata section header truncated")
    used, alloc, cid = METADATA_HEADER.unpack_from(b, 0)
    if cid not in range(len(CHECKSUM_NAMES)):
        raise InvalidMetadata(f"checksum id {cid} out of range")
    if used > alloc:
        raise InvalidMetadata(f"used_size {used} > alloc_size {alloc}")
    end = metadata_section_size(alloc, cid)
    if len(b) < end:
        raise TruncatedFile(f"metadata section needs {end} bytes, got {len(b)}")
    start = METADATA_HEADER_LENGTH
    payload = bytes(b[start:start + used])
    stored = bytes(b[start + alloc:end])
    if stored != compute_checksum(cid, payload):
        raise MetadataChecksumMismatch("metadata checksum does not match payload")
    return MetadataSection(payload=payload, alloc_size=alloc, checksum_id=cid)


# -- offsets -----------------------------------------------------------------

def encode_offsets(entries) -> bytes:
    return np.asarray(entries, dtype="<i8").tobytes()


def decode_offsets(b, n_slots: int) -> list[int]:
    need = n_slots * OFFSET_SIZE
    if len(b) < need:
        raise TruncatedOffsets(f"{n_slots} offset slots need {need} bytes, got {len(b)}")
    return np.frombuffer(b, dtype="<i8", count=n_slots).tolist()
