"""``blpk``: subcommand front end for the container format.

::

    blpk compress data.dat               # writes data.dat.blp
    blpk decompress data.dat.blp data.dcmp
    blpk append data.dat.blp more.dat
    blpk info data.dat.blp [--json]

Exit codes: 0 success, 1 usage error, 2 format error, 3 checksum mismatch,
4 I/O error, 5 append not possible (no free slots, no offsets, partial
final chunk).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from . import format as fmt
from .codec import CodecParams, default_threads
from .container import (
    DEFAULT_CHECKSUM,
    DEFAULT_CHUNK_SIZE,
    PackArgs,
    append_file,
    file_info,
    pack_file,
    unpack_file,
)
from .errors import (
    AppendToPartialChunk,
    ChecksumMismatch,
    ChunkpackError,
    FormatError,
    NoAppendSpace,
    NoOffsets,
)

log = logging.getLogger("chunkpack")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_CHECKSUM = 3
EXIT_IO = 4
EXIT_APPEND = 5

HEADER_FIELDS = ("magic", "format_version", "options", "checksum_id", "typesize",
                 "chunk_size", "last_chunk", "nchunks", "max_app_chunks")

SUFFIXES = {"B": 1, "K": 2**10, "M": 2**20, "G": 2**30}

EPILOG = """\
exit codes:
  0  success
  1  usage error (bad arguments, output exists without --force)
  2  format error (bad magic, unsupported version, corrupt frame)
  3  checksum mismatch
  4  I/O error (missing file, permission denied, ...)
  5  cannot append (no free offset slots, no offsets, partial last chunk)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_size(text: str) -> int:
    """``"1M"`` -> 1048576.  Accepts B/K/M/G suffixes, case-insensitive."""
    t = text.strip().upper()
    mult = 1
    if t and t[-1] in SUFFIXES:
        mult = SUFFIXES[t[-1]]
        t = t[:-1]
    try:
        value = int(float(t) * mult)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a size: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"size must be positive: {text!r}")
    return value


def _level(text: str) -> int:
    v = int(text)
    if not 0 <= v <= 9:
        raise argparse.ArgumentTypeError("level must be in 0..9")
    return v


def _typesize(text: str) -> int:
    v = int(text)
    if not 1 <= v <= 255:
        raise argparse.ArgumentTypeError("typesize must be in 1..255")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blpk", description="Chunked, compressed serialization of binary data.",
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-n", "--nthreads", type=int, default=default_threads(),
                   help="worker threads for the codec (default: logical CPU count)")
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="report progress")
    verbosity.add_argument("-d", "--debug", action="store_true", help="report everything")
    sub = p.add_subparsers(dest="command", metavar="{compress,decompress,append,info}",
                           parser_class=_Parser)

    c = sub.add_parser("compress", aliases=["c"], help="compress a file")
    c.add_argument("in_file")
    c.add_argument("out_file", nargs="?", help="default: IN_FILE" + fmt.EXTENSION)
    c.add_argument("-f", "--force", action="store_true", help="overwrite existing output")
    c.add_argument("-l", "--level", type=_level, default=7, help="0..9 (default: 7)")
    c.add_argument("-t", "--typesize", type=_typesize, default=8,
                   help="element size for the shuffle filter (default: 8)")
    c.add_argument("-s", "--no-shuffle", action="store_true", help="disable the shuffle filter")
    c.add_argument("-z", "--chunk-size", type=parse_size, default=DEFAULT_CHUNK_SIZE,
                   help="bytes per chunk, suffixes K/M/G allowed (default: 1M)")
    c.add_argument("-k", "--checksum", choices=fmt.CHECKSUM_NAMES, default=DEFAULT_CHECKSUM,
                   help=f"chunk checksum (default: {DEFAULT_CHECKSUM})")
    c.add_argument("-o", "--no-offsets", action="store_true",
                   help="omit the offsets section (disables append)")
    c.add_argument("-m", "--max-app-chunks", type=int, default=None,
                   help="offset slots reserved for appending (default: 10 * nchunks)")
    c.add_argument("--metadata", metavar="FILE",
                   help="store the contents of FILE in the metadata section")

    d = sub.add_parser("decompress", aliases=["d"], help="decompress a file")
    d.add_argument("in_file")
    d.add_argument("out_file", nargs="?", help="default: IN_FILE without " + fmt.EXTENSION)
    d.add_argument("-f", "--force", action="store_true", help="overwrite existing output")

    a = sub.add_parser("append", aliases=["a"], help="append a file to a compressed file")
    a.add_argument("original_file")
    a.add_argument("new_file")
    a.add_argument("-l", "--level", type=_level, default=7, help="0..9 (default: 7)")
    a.add_argument("-s", "--no-shuffle", action="store_true", help="disable the shuffle filter")

    i = sub.add_parser("info", aliases=["i"], help="print header and metadata")
    i.add_argument("file")
    i.add_argument("--json", action="store_true", help="machine readable output")
    return p


def _check_output(path: str, force: bool) -> None:
    if os.path.exists(path) and not force:
        raise UsageError(f"output file {path!r} exists, use --force to overwrite")


def _compress(ns) -> int:
    out = ns.out_file or ns.in_file + fmt.EXTENSION
    _check_output(out, ns.force)
    metadata = None
    if ns.metadata:
        with open(ns.metadata, "rb") as f:
            metadata = f.read()
    args = PackArgs(level=ns.level, shuffle=not ns.no_shuffle, typesize=ns.typesize,
                    n_threads=ns.nthreads, chunk_size=ns.chunk_size, checksum=ns.checksum,
                    offsets=not ns.no_offsets, max_app_chunks=ns.max_app_chunks,
                    metadata=metadata)
    result = pack_file(ns.in_file, out, args)
    log.info("%s -> %s: %d chunks, ratio %.3f", ns.in_file, out, result.header.nchunks,
             result.ratio)
    return EXIT_OK


def _decompress(ns) -> int:
    out = ns.out_file
    if out is None:
        if not ns.in_file.endswith(fmt.EXTENSION):
            raise UsageError(f"{ns.in_file!r} does not end in {fmt.EXTENSION}; "
                             "give an output file name")
        out = ns.in_file[:-len(fmt.EXTENSION)]
    _check_output(out, ns.force)
    try:
        _, total = unpack_file(ns.in_file, out, n_threads=ns.nthreads)
    except ChunkpackError:
        if os.path.exists(out):
            os.remove(out)
        raise
    log.info("%s -> %s: %d bytes", ns.in_file, out, total)
    return EXIT_OK


def _append(ns) -> int:
    h = file_info(ns.original_file).header
    params = CodecParams(level=ns.level, shuffle=not ns.no_shuffle, typesize=h.typesize,
                         n_threads=ns.nthreads)
    n = append_file(ns.original_file, ns.new_file, params)
    log.info("%s now has %d chunks", ns.original_file, n)
    return EXIT_OK


def info_fields(path: str) -> dict:
    fi = file_info(path)
    h = fi.header
    meta = fi.metadata
    try:
        meta_out = meta.decode("utf-8") if meta is not None else None
    except UnicodeDecodeError:
        meta_out = meta.hex()
    return {
        "magic": fmt.MAGIC.decode("ascii"),
        "format_version": h.format_version,
        "options": h.options,
        "checksum_id": h.checksum_id,
        "typesize": h.typesize,
        "chunk_size": h.chunk_size,
        "last_chunk": h.last_chunk,
        "nchunks": h.nchunks,
        "max_app_chunks": h.max_app_chunks,
        "offsets_present": h.offsets_present,
        "metadata_present": h.metadata_present,
        "checksum": fmt.CHECKSUM_NAMES[h.checksum_id],
        "metadata": meta_out,
        "metadata_alloc": fi.metadata_alloc,
        "uncompressed_bytes": fi.nbytes,
        "file_bytes": fi.file_size,
        "ratio": fi.ratio,
        "compressed_frame_bytes": fi.chunk_sizes,
        "offsets": fi.offsets,
    }


def _info(ns, stdout) -> int:
    fields = info_fields(ns.file)
    if ns.json:
        print(json.dumps(fields, indent=2), file=stdout)
        return EXIT_OK
    for key, value in fields.items():
        if key == "options":
            value = f"{value:#04x}"
        elif key == "ratio":
            value = f"{value:.4f}"
        elif key == "offsets" and value is not None:
            used = [o for o in value if o != fmt.UNUSED_OFFSET]
            value = f"{used} + {len(value) - len(used)} free slots"
        print(f"{key}: {value}", file=stdout)
    return EXIT_OK


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required")
        if ns.nthreads < 1:
            raise UsageError("--nthreads must be >= 1")
    except UsageError as e:
        parser.print_usage(stderr)
        print(f"blpk: error: {e}", file=stderr)
        return EXIT_USAGE

    level = logging.DEBUG if ns.debug else logging.INFO if ns.verbose else logging.WARNING
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("blpk: %(message)s"))
    log.addHandler(handler)
    log.setLevel(level)
    try:
        cmd = ns.command[0]
        if cmd == "c":
            return _compress(ns)
        if cmd == "d":
            return _decompress(ns)
        if cmd == "a":
            return _append(ns)
        return _info(ns, stdout)
    except UsageError as e:
        print(f"blpk: error: {e}", file=stderr)
        return EXIT_USAGE
    except ChecksumMismatch as e:
        print(f"blpk: error: {e}", file=stderr)
        return EXIT_CHECKSUM
    except (NoAppendSpace, NoOffsets, AppendToPartialChunk) as e:
        print(f"blpk: error: cannot append: {e}", file=stderr)
        return EXIT_APPEND
    except FormatError as e:
        print(f"blpk: error: not a valid file: {e}", file=stderr)
        return EXIT_FORMAT
    except ChunkpackError as e:
        print(f"blpk: error: {e}", file=stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"blpk: error: {e}", file=stderr)
        return EXIT_IO
    finally:
        log.removeHandler(handler)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
