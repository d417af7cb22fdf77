import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chunkpack import format as fmt
from chunkpack.errors import (
    BadMagic,
    InvalidHeader,
    InvalidMetadata,
    MetadataChecksumMismatch,
    TruncatedFile,
    TruncatedOffsets,
    UnsupportedVersion,
)
from chunkpack.format import FileHeader, MetadataSection


@st.composite
def headers(draw):
    chunk_size = draw(st.integers(1, fmt.MAX_CHUNK_SIZE))
    nchunks = draw(st.integers(1, fmt.MAX_CHUNKS))
    return FileHeader(
        chunk_size=chunk_size,
        last_chunk=draw(st.integers(0, chunk_size)),
        nchunks=nchunks,
        max_app_chunks=draw(st.integers(0, fmt.MAX_CHUNKS - nchunks)),
        typesize=draw(st.integers(1, 255)),
        checksum_id=draw(st.integers(0, 3)),
        offsets_present=draw(st.booleans()),
        metadata_present=draw(st.booleans()),
    )


def test_default_header_layout():
    b = fmt.encode_header(FileHeader(chunk_size=1048576, last_chunk=1048576, nchunks=1))
    assert len(b) == 32
    assert b[:4] == fmt.MAGIC == b"blpk"
    assert b[4] == 3


def test_header_golden(golden):
    h = FileHeader(chunk_size=1048576, last_chunk=80000, nchunks=1, max_app_chunks=10,
                   typesize=8, checksum_id=fmt.CHECKSUM_CRC32, offsets_present=True,
                   metadata_present=True)
    expected = golden("header_crc32_meta.hex")
    assert fmt.encode_header(h) == expected
    assert fmt.decode_header(expected) == h


@given(headers())
def test_header_round_trip(h):
    b = fmt.encode_header(h)
    assert len(b) == fmt.HEADER_LENGTH
    assert fmt.decode_header(b) == h


@given(headers(), st.binary(max_size=40))
def test_decode_consumes_only_32_bytes(h, tail):
    assert fmt.decode_header(fmt.encode_header(h) + tail) == h


@pytest.mark.parametrize("kwargs", [
    dict(chunk_size=0),
    dict(chunk_size=-5),
    dict(last_chunk=-1),
    dict(last_chunk=2049),
    dict(nchunks=0),
    dict(max_app_chunks=-1),
    dict(nchunks=2**62, max_app_chunks=2**62),
    dict(typesize=0),
    dict(typesize=256),
    dict(checksum_id=4),
])
def test_invalid_header_rejected(kwargs):
    base = dict(chunk_size=2048, last_chunk=100, nchunks=3)
    base.update(kwargs)
    with pytest.raises(InvalidHeader):
        fmt.encode_header(FileHeader(**base))


def _valid_bytes():
    return bytearray(fmt.encode_header(FileHeader(chunk_size=64, last_chunk=64, nchunks=2)))


def test_bad_magic():
    b = _valid_bytes()
    b[:4] = b"XXXX"
    with pytest.raises(BadMagic):
        fmt.decode_header(b)


def test_unsupported_version():
    b = _valid_bytes()
    b[4] = 9
    with pytest.raises(UnsupportedVersion):
        fmt.decode_header(b)


def test_unknown_option_bits():
    b = _valid_bytes()
    b[5] |= 0x80
    with pytest.raises(InvalidHeader):
        fmt.decode_header(b)


def test_decoded_field_range_checked():
    b = _valid_bytes()
    struct.pack_into("<i", b, 12, 65)  # last_chunk > chunk_size
    with pytest.raises(InvalidHeader):
        fmt.decode_header(b)


def test_short_header():
    with pytest.raises(TruncatedFile):
        fmt.decode_header(_valid_bytes()[:31])


# -- metadata ------------------------------------------------------------------

def test_metadata_golden(golden):
    m = MetadataSection(b"{}", alloc_size=8, checksum_id=fmt.CHECKSUM_CRC32)
    expected = golden("metadata_braces_crc32.hex")
    assert fmt.encode_metadata_section(m) == expected
    assert fmt.decode_metadata_section(expected) == m


def test_metadata_braces_alloc_64():
    m = MetadataSection(b"{}", alloc_size=64)
    b = fmt.encode_metadata_section(m)
    assert len(b) == 12 + 64
    assert b[12 + 2:] == bytes(62)
    assert fmt.decode_metadata_section(b) == m


def test_metadata_empty():
    b = fmt.encode_metadata_section(MetadataSection(b"", alloc_size=0))
    assert len(b) == 12
    assert fmt.decode_metadata_section(b) == MetadataSection(b"", 0)


@pytest.mark.parametrize("cid", [1, 2, 3])
def test_metadata_corruption_detected(cid):
    b = bytearray(fmt.encode_metadata_section(MetadataSection(b'{"k":1}', 32, cid)))
    b[13] ^= 0x01
    with pytest.raises(MetadataChecksumMismatch):
        fmt.decode_metadata_section(b)


def test_metadata_used_exceeds_alloc():
    with pytest.raises(InvalidMetadata):
        fmt.encode_metadata_section(MetadataSection(b"abc", alloc_size=2))
    b = bytearray(fmt.encode_metadata_section(MetadataSection(b"ab", alloc_size=2)))
    struct.pack_into("<I", b, 0, 3)
    with pytest.raises(InvalidMetadata):
        fmt.decode_metadata_section(b)


def test_metadata_truncated():
    b = fmt.encode_metadata_section(MetadataSection(b"abc", alloc_size=30, checksum_id=3))
    with pytest.raises(TruncatedFile):
        fmt.decode_metadata_section(b[:-1])


@given(st.binary(max_size=200), st.integers(0, 300), st.integers(0, 3))
def test_metadata_round_trip(payload, extra, cid):
    m = MetadataSection(payload, len(payload) + extra, cid)
    b = fmt.encode_metadata_section(m)
    assert len(b) == m.encoded_size == 12 + m.alloc_size + fmt.CHECKSUM_SIZES[cid]
    assert fmt.decode_metadata_section(b) == m


# -- offsets -------------------------------------------------------------------

def test_offsets_golden(golden):
    expected = golden("offsets_288_unused.hex")
    assert fmt.encode_offsets([288, -1]) == expected
    assert fmt.decode_offsets(expected, 2) == [288, -1]


def test_offsets_empty():
    assert fmt.encode_offsets([]) == b""
    assert fmt.decode_offsets(b"", 0) == []


def test_offsets_truncated():
    with pytest.raises(TruncatedOffsets):
        fmt.decode_offsets(bytes(9), 2)


@given(st.lists(st.integers(-1, 2**63 - 1), max_size=50))
def test_offsets_round_trip(entries):
    b = fmt.encode_offsets(entries)
    assert len(b) == 8 * len(entries)
    assert fmt.decode_offsets(b, len(entries)) == entries


# -- checksums -----------------------------------------------------------------

def test_checksum_names_and_sizes():
    assert [fmt.checksum_id(n) for n in ("none", "adler32", "crc32", "sha256")] == [0, 1, 2, 3]
    assert fmt.checksum_id("CRC32") == 2
    assert [len(fmt.compute_checksum(c, b"xyz")) for c in range(4)] == [0, 4, 4, 32]
    with pytest.raises(ValueError):
        fmt.checksum_id("md5")


@given(st.lists(st.binary(max_size=64), max_size=6), st.integers(0, 3))
def test_checksum_parts_matches_joined(parts, cid):
    assert fmt.checksum_parts(cid, parts) == fmt.compute_checksum(cid, b"".join(parts))
