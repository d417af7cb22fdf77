"""Store N-dimensional arrays: raw data buffer in chunks, descriptor in metadata.

The descriptor is kept as a small canonical JSON document, e.g.::

    {"container":"ndarray","shape":[3,2],"dtype":"<f8","order":"C"}

The data buffer is stored exactly as it sits in memory, so Fortran-ordered
arrays are written without a transpose and big-endian data keeps its byte
order.  On the way back the output array is allocated once from the
descriptor and every chunk is decompressed straight into it.
"""

from __future__ import annotations

import io
import json
import math
import re
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .container import BufferReader, FileInfo, PackArgs, pack, read_metadata, unpack_into
from .errors import DescriptorMismatch, InvalidDtype, NotAnArrayFile

CONTAINER_TAG = "ndarray"

_DTYPE_RE = re.compile(r"([<>|])([iufbS])([0-9]+)\Z")
_KIND_SIZES = {
    "i": (1, 2, 4, 8),
    "u": (1, 2, 4, 8),
    "f": (2, 4, 8, 16),
    "b": (1,),
}


class DtypeSpec(NamedTuple):
    byteorder: str
    kind: str
    itemsize: int


def parse_dtype(s: str) -> DtypeSpec:
    """Split a descriptor like ``"<f8"`` into byte order, kind and item size.

    Byte order is ``<`` (little), ``>`` (big) or ``|`` (not applicable, only
    for single-byte kinds and byte strings).  Kinds: ``i`` signed, ``u``
    unsigned, ``f`` float, ``b`` bool, ``S`` fixed-width byte string.
    """
    m = _DTYPE_RE.match(s) if isinstance(s, str) else None
    if m is None:
        raise InvalidDtype(f"unsupported dtype descriptor {s!r}")
    order, kind, digits = m.groups()
    size = int(digits)
    if digits != str(size):
        raise InvalidDtype(f"non-canonical item size in {s!r}")
    if kind == "S":
        if size < 1:
            raise InvalidDtype(f"byte strings need a positive width: {s!r}")
    elif size not in _KIND_SIZES[kind]:
        raise InvalidDtype(f"item size {size} not valid for kind {kind!r}")
    if order == "|" and kind != "S" and size != 1:
        raise InvalidDtype(f"'|' byte order needs a single-byte kind: {s!r}")
    return DtypeSpec(order, kind, size)


def format_dtype(byteorder: str, kind: str, itemsize: int) -> str:
    s = f"{byteorder}{kind}{itemsize}"
    parse_dtype(s)
    return s


@dataclass(frozen=True)
class ArrayDescriptor:
    shape: tuple[int, ...]
    dtype: str
    order: str = "C"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if any(d < 0 for d in self.shape):
            raise DescriptorMismatch(f"negative extent in shape {self.shape}")
        if self.order not in ("C", "F"):
            raise DescriptorMismatch(f"order must be 'C' or 'F', got {self.order!r}")
        parse_dtype(self.dtype)

    @property
    def itemsize(self) -> int:
        return parse_dtype(self.dtype).itemsize

    @property
    def count(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.count * self.itemsize

    def to_json(self) -> bytes:
        doc = {"container": CONTAINER_TAG, "shape": list(self.shape),
               "dtype": self.dtype, "order": self.order}
        return json.dumps(doc, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_json(cls, payload: bytes | None) -> ArrayDescriptor:
        try:
            doc = json.loads(payload.decode("utf-8")) if payload else None
        except (UnicodeDecodeError, json.JSONDecodeError):
            doc = None
        if not isinstance(doc, dict) or doc.get("container") != CONTAINER_TAG:
            raise NotAnArrayFile("metadata does not describe an ndarray")
        try:
            return cls(tuple(doc["shape"]), doc["dtype"], doc["order"])
        except (KeyError, TypeError) as e:
            raise NotAnArrayFile(f"malformed array descriptor: {e}") from None

    @classmethod
    def of(cls, arr: np.ndarray) -> ArrayDescriptor:
        if arr.dtype.fields is not None or arr.dtype.hasobject:
            raise InvalidDtype(f"structured and object dtypes are not supported: {arr.dtype}")
        order = "F" if arr.flags.f_contiguous and not arr.flags.c_contiguous else "C"
        return cls(arr.shape, arr.dtype.str, order)


def shuffle_typesize(itemsize: int) -> int:
    return itemsize if itemsize <= 255 else 1


def pack_array(desc: ArrayDescriptor, data, sink, args: PackArgs | None = None) -> FileInfo:
    """Write ``data`` (laid out in ``desc.order``) with ``desc`` as metadata."""
    if isinstance(data, np.ndarray):
        data = data.reshape(-1, order="A").view(np.uint8)
    src = BufferReader(data)
    size = src.seek(0, io.SEEK_END)
    src.seek(0)
    if size != desc.nbytes:
        raise DescriptorMismatch(
            f"buffer has {size} bytes, descriptor {desc} needs {desc.nbytes}")
    args = replace(args or PackArgs(), typesize=shuffle_typesize(desc.itemsize),
                   metadata=desc.to_json())
    return pack(src, sink, args, nbytes=desc.nbytes)


def _read_descriptor(source) -> ArrayDescriptor:
    start = source.tell()
    header, payload = read_metadata(source)
    source.seek(start)
    desc = ArrayDescriptor.from_json(payload)
    stored = (header.nchunks - 1) * header.chunk_size + header.last_chunk
    if stored != desc.nbytes:
        raise DescriptorMismatch(f"file holds {stored} bytes, descriptor needs {desc.nbytes}")
    return desc


def unpack_array(source, n_threads: int = 1) -> tuple[ArrayDescriptor, bytearray]:
    """Read an array file back as its descriptor and raw data buffer."""
    desc = _read_descriptor(source)
    out = bytearray(desc.nbytes)
    unpack_into(source, out, n_threads=n_threads)
    return desc, out


def pack_ndarray(arr: np.ndarray, sink, args: PackArgs | None = None) -> FileInfo:
    arr = np.asanyarray(arr)
    if not (arr.flags.c_contiguous or arr.flags.f_contiguous):
        arr = np.ascontiguousarray(arr)
    desc = ArrayDescriptor.of(arr)
    return pack_array(desc, arr, sink, args)


def unpack_ndarray(source, n_threads: int = 1) -> np.ndarray:
    desc = _read_descriptor(source)
    arr = np.empty(desc.shape, dtype=np.dtype(desc.dtype), order=desc.order)
    unpack_into(source, arr.reshape(-1, order="A").view(np.uint8), n_threads=n_threads)
    return arr


def pack_ndarray_bytes(arr: np.ndarray, args: PackArgs | None = None) -> bytes:
    sink = io.BytesIO()
    pack_ndarray(arr, sink, args)
    return sink.getvalue()


def unpack_ndarray_bytes(blob) -> np.ndarray:
    return unpack_ndarray(BufferReader(blob))


def pack_ndarray_file(arr: np.ndarray, path, args: PackArgs | None = None) -> FileInfo:
    with open(path, "wb") as f:
        return pack_ndarray(arr, f, args)


def unpack_ndarray_file(path, n_threads: int = 1) -> np.ndarray:
    with open(path, "rb") as f:
        return unpack_ndarray(f, n_threads=n_threads)
