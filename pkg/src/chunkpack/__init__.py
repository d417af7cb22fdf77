"""Chunked, compressed, appendable serialization for numerical data."""

__version__ = "0.1.0"

from .arrays import (
    ArrayDescriptor,
    pack_array,
    pack_ndarray,
    pack_ndarray_bytes,
    pack_ndarray_file,
    unpack_array,
    unpack_ndarray,
    unpack_ndarray_bytes,
    unpack_ndarray_file,
)
from .codec import CodecParams, compress_chunk, decompress_chunk
from .container import (
    FileInfo,
    PackArgs,
    append,
    append_file,
    file_info,
    info,
    pack,
    pack_bytes,
    pack_file,
    unpack,
    unpack_bytes,
    unpack_file,
    unpack_into,
)
from .errors import *  # noqa: F401,F403
