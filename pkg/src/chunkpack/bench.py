"""Benchmark harness: serialize test datasets with several codecs and time it.

The grid is size class x entropy class x serializer x storage directory.
Every timing is the mean over ``runs`` repetitions within a set, then the
minimum over ``sets``.  Writes include flushing the file to storage, so the
cost of actually getting the bytes onto the medium is part of the number.

Serializers:

``chunkpack``
    this package's container, no checksums and no offsets.
``plain``
    raw buffer behind a 32 byte descriptor header, no compression.
``zlib-whole``
    DEFLATE over the entire buffer in one call, the way single-stream
    compressed array formats do it.  ``lz-whole`` replaces it (same levels)
    when the interpreter has no zlib.

For repeatable numbers, stop cron jobs and power-management daemons (laptop
mode tools and similar) before a run; they change write-back latency and CPU
frequency underneath the measurement.
"""

from __future__ import annotations

import argparse
import csv
import gc
import hashlib
import json
import logging
import math
import os
import struct
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .codec import CodecParams, compress_chunk, decompress_chunk_into, default_threads
from .container import BufferReader, PackArgs, pack, unpack_into
from .errors import EmptySamples

try:
    import zlib
except ImportError:  # pragma: no cover - CPython always ships zlib
    zlib = None

log = logging.getLogger(__name__)

SIZE_ELEMENTS = {"small": 10**4, "mid": 10**7, "large": 2 * 10**8}
REPEATS = {"small": (10, 10), "mid": (5, 5), "large": (3, 3)}
ENTROPIES = ("low", "medium", "high")
ELEMENT_SIZE = 8

CSV_COLUMNS = ("serializer", "level", "size_class", "entropy", "storage", "t_compress_s",
               "t_decomp_cold_s", "t_decomp_hot_s", "ratio", "sets", "runs", "seed")

WHOLE_BUFFER_ID = "zlib-whole" if zlib is not None else "lz-whole"


# -- datasets ----------------------------------------------------------------

def generate_dataset(entropy: str, n: int, seed: int = 0) -> np.ndarray:
    """``n`` eight-byte elements of the given entropy class.

    low: consecutive int64 0..n-1.  medium: sin(2 pi i / 1000) plus uniform
    noise in [-0.1, 0.1].  high: 64 uniformly random bits per element.
    """
    if entropy == "low":
        return np.arange(n, dtype="<i8")
    rng = np.random.default_rng(seed)
    if entropy == "medium":
        i = np.arange(n, dtype="<f8")
        return (np.sin(2 * np.pi * i / 1000) + rng.uniform(-0.1, 0.1, n)).astype("<f8")
    if entropy == "high":
        return np.frombuffer(rng.bytes(ELEMENT_SIZE * n), dtype="<u8").copy()
    raise ValueError(f"unknown entropy class {entropy!r}, expected one of {ENTROPIES}")


# -- timing ------------------------------------------------------------------

def time_once(action: Callable[[], object], pre_hook: Callable[[], object] | None = None,
              post_hook: Callable[[], object] | None = None) -> float:
    """Wall-clock seconds for one call of ``action``.

    The hooks run outside the timed region; the garbage collector is off
    inside it.  Write actions are expected to flush and sync their file
    themselves so that the sync is counted.
    """
    if pre_hook is not None:
        pre_hook()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        start = time.perf_counter()
        action()
        elapsed = time.perf_counter() - start
    finally:
        if was_enabled:
            gc.enable()
    if post_hook is not None:
        post_hook()
    return elapsed


def aggregate(samples) -> float:
    """Mean over the runs of each set, then the minimum over sets."""
    sets = [list(s) for s in samples]
    if not sets or any(not s for s in sets):
        raise EmptySamples("need at least one set with at least one run")
    return min(math.fsum(s) / len(s) for s in sets)


def measure(action, sets: int, runs: int, pre_hook=None, post_hook=None) -> float:
    samples = [[time_once(action, pre_hook, post_hook) for _ in range(runs)]
               for _ in range(sets)]
    return aggregate(samples)


def drop_file_cache(path) -> bool:
    """Evict ``path`` from the OS page cache; False when the platform can't."""
    if not hasattr(os, "posix_fadvise"):
        return False
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
        os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
    except OSError:
        return False
    finally:
        os.close(fd)
    return True


# -- serializers -------------------------------------------------------------

def _finish(f, sync: bool) -> None:
    if sync:
        f.flush()
        os.fsync(f.fileno())


class Serializer:
    """Writes an eight-byte-element buffer to a file and reads it back."""

    name = ""
    extension = ""

    def __init__(self, level: int = 0):
        self.level = level

    def write(self, data: np.ndarray, path, sync: bool = True) -> None:
        raise NotImplementedError

    def read(self, path, nbytes: int) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(level={self.level})"


class ChunkpackSerializer(Serializer):
    name = "chunkpack"
    extension = ".blp"

    def __init__(self, level: int = 7, n_threads: int | None = None):
        super().__init__(level)
        # benchmark settings: no checksums, no offsets
        self.args = PackArgs(level=level, typesize=ELEMENT_SIZE, checksum="none", offsets=False,
                             n_threads=n_threads or default_threads())

    def write(self, data, path, sync=True):
        with open(path, "wb") as f:
            pack(BufferReader(data), f, self.args, nbytes=data.nbytes)
            _finish(f, sync)

    def read(self, path, nbytes):
        out = np.empty(nbytes, dtype=np.uint8)
        with open(path, "rb") as f:
            unpack_into(f, out, n_threads=self.args.n_threads)
        return out


_PLAIN_HEADER = struct.Struct("<4sB3xQ4sQ4x")


class PlainSerializer(Serializer):
    """Uncompressed: a 32 byte header (magic, version, nbytes, dtype) + raw data."""

    name = "plain"
    extension = ".raw"

    def write(self, data, path, sync=True):
        header = _PLAIN_HEADER.pack(b"PLNS", 1, data.nbytes, data.dtype.str.encode().ljust(4),
                                    data.size)
        with open(path, "wb") as f:
            f.write(header)
            f.write(data)
            _finish(f, sync)

    def read(self, path, nbytes):
        out = np.empty(nbytes, dtype=np.uint8)
        with open(path, "rb") as f:
            f.seek(_PLAIN_HEADER.size)
            f.readinto(out)
        return out


class WholeBufferSerializer(Serializer):
    """One compressor call over the entire buffer, no chunking."""

    name = WHOLE_BUFFER_ID
    extension = ".z"

    def write(self, data, path, sync=True):
        if zlib is not None:
            blob = zlib.compress(data, self.level)
        else:  # pragma: no cover
            blob = compress_chunk(CodecParams(level=self.level, shuffle=False, typesize=1,
                                              block_size=max(1, data.nbytes)), data)
        with open(path, "wb") as f:
            f.write(blob)
            _finish(f, sync)

    def read(self, path, nbytes):
        with open(path, "rb") as f:
            blob = f.read()
        if zlib is not None:
            return np.frombuffer(zlib.decompress(blob), dtype=np.uint8)
        out = np.empty(nbytes, dtype=np.uint8)  # pragma: no cover
        decompress_chunk_into(blob, out)  # pragma: no cover
        return out  # pragma: no cover


SERIALIZERS = {
    ChunkpackSerializer.name: ChunkpackSerializer,
    PlainSerializer.name: PlainSerializer,
    WholeBufferSerializer.name: WholeBufferSerializer,
}

DEFAULT_GRID = (
    [(ChunkpackSerializer.name, lvl) for lvl in (1, 3, 7, 9)]
    + [(PlainSerializer.name, 0)]
    + [(WholeBufferSerializer.name, lvl) for lvl in (1, 3, 7)]
)


# -- configuration and records ----------------------------------------------

@dataclass
class BenchConfig:
    sizes: list[str] = field(default_factory=lambda: ["small", "mid"])
    entropies: list[str] = field(default_factory=lambda: list(ENTROPIES))
    serializers: list[tuple[str, int]] = field(default_factory=lambda: list(DEFAULT_GRID))
    size_elements: dict[str, int] = field(default_factory=lambda: dict(SIZE_ELEMENTS))
    repeats: dict[str, tuple[int, int]] = field(default_factory=lambda: dict(REPEATS))
    storage: list[str] = field(default_factory=lambda: ["."])
    sync_after_write: bool = True
    cold: bool = False
    seed: int = 42
    n_threads: int | None = None
    csv_path: str | None = None

    def __post_init__(self):
        for name in self.sizes:
            if name not in self.size_elements or name not in self.repeats:
                raise ValueError(f"size class {name!r} needs element count and repeats")
        for name, (sets, runs) in self.repeats.items():
            if sets < 1 or runs < 1:
                raise ValueError(f"{name}: sets and runs must be >= 1")
        for e in self.entropies:
            if e not in ENTROPIES:
                raise ValueError(f"unknown entropy class {e!r}")
        self.serializers = [(s, int(lvl)) for s, lvl in self.serializers]
        for s, _ in self.serializers:
            if s not in SERIALIZERS:
                raise ValueError(f"unknown serializer {s!r}")
        self.repeats = {k: tuple(v) for k, v in self.repeats.items()}

    @classmethod
    def from_dict(cls, d: dict) -> BenchConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> BenchConfig:
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class BenchRecord:
    serializer: str
    level: int
    size_class: str
    entropy: str
    storage: str
    t_compress: float | None
    t_decompress_cold: float | None
    t_decompress_hot: float | None
    ratio: float | None
    sets: int
    runs: int
    seed: int
    beats_plain: bool | None = None
    error: str | None = None

    def csv_row(self) -> dict:
        def num(x):
            return "" if x is None else repr(float(x))
        return {
            "serializer": self.serializer,
            "level": self.level,
            "size_class": self.size_class,
            "entropy": self.entropy,
            "storage": self.storage,
            "t_compress_s": num(self.t_compress),
            "t_decomp_cold_s": num(self.t_decompress_cold),
            "t_decomp_hot_s": num(self.t_decompress_hot),
            "ratio": num(self.ratio),
            "sets": self.sets,
            "runs": self.runs,
            "seed": self.seed,
        }


def make_serializer(name: str, level: int, n_threads: int | None = None) -> Serializer:
    if name == ChunkpackSerializer.name:
        return ChunkpackSerializer(level, n_threads)
    return SERIALIZERS[name](level)


def _digest(buf) -> bytes:
    return hashlib.blake2b(memoryview(buf).cast("B")).digest()


def bench_one(ser: Serializer, data: np.ndarray, path: Path, sets: int, runs: int,
              sync: bool = True, cold: bool = False) -> tuple[float, float | None, float, float]:
    """Time one serializer on one dataset: (t_write, t_cold, t_hot, ratio).

    Raises if the round trip does not reproduce the input.
    """
    def remove():
        if path.exists():
            path.unlink()

    t_write = measure(lambda: ser.write(data, path, sync), sets, runs, pre_hook=remove)
    ratio = data.nbytes / path.stat().st_size
    if _digest(ser.read(path, data.nbytes)) != _digest(data):
        raise AssertionError(f"{ser!r}: round trip does not reproduce the input")
    t_cold = None
    if cold and drop_file_cache(path):
        t_cold = measure(lambda: ser.read(path, data.nbytes), sets, runs,
                         pre_hook=lambda: drop_file_cache(path))
    ser.read(path, data.nbytes)
    t_hot = measure(lambda: ser.read(path, data.nbytes), sets, runs)
    return t_write, t_cold, t_hot, ratio


def run_matrix(cfg: BenchConfig) -> list[BenchRecord]:
    """Run the whole grid; one record per cell, failures recorded not raised."""
    records = []
    for size in cfg.sizes:
        n = cfg.size_elements[size]
        sets, runs = cfg.repeats[size]
        for entropy in cfg.entropies:
            data = generate_dataset(entropy, n, cfg.seed)
            for storage in cfg.storage:
                target = Path(storage)
                target.mkdir(parents=True, exist_ok=True)
                cell = []
                for name, level in cfg.serializers:
                    ser = make_serializer(name, level, cfg.n_threads)
                    path = target / f"bench-{size}-{entropy}-{name}-{level}{ser.extension}"
                    rec = BenchRecord(name, level, size, entropy, str(storage), None, None,
                                      None, None, sets, runs, cfg.seed)
                    try:
                        t_w, t_c, t_h, ratio = bench_one(ser, data, path, sets, runs,
                                                         cfg.sync_after_write, cfg.cold)
                        rec.t_compress, rec.t_decompress_cold = t_w, t_c
                        rec.t_decompress_hot, rec.ratio = t_h, ratio
                    except Exception as e:  # noqa: BLE001 - keep the matrix going
                        log.warning("%s level %d on %s/%s failed: %s", name, level, size,
                                    entropy, e)
                        rec.error = f"{type(e).__name__}: {e}"
                    finally:
                        if path.exists():
                            path.unlink()
                    log.info("%-11s %d %-5s %-6s write %s hot %s ratio %s", name, level, size,
                             entropy, rec.t_compress, rec.t_decompress_hot, rec.ratio)
                    cell.append(rec)
                plain = [r.t_compress for r in cell
                         if r.serializer == PlainSerializer.name and r.t_compress is not None]
                for r in cell:
                    if plain and r.t_compress is not None:
                        r.beats_plain = r.t_compress < plain[0]
                records.extend(cell)
    if cfg.csv_path:
        write_csv(records, cfg.csv_path)
    return records


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow(r.csv_row())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _csv_list(text):
    return [t for t in text.split(",") if t]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="blpk-bench", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="JSON file with BenchConfig fields")
    p.add_argument("--sizes", type=_csv_list, help="comma separated: small,mid,large")
    p.add_argument("--entropies", type=_csv_list, help="comma separated: low,medium,high")
    p.add_argument("--storage", action="append", help="directory to write to (repeatable)")
    p.add_argument("--sets", type=int, help="override sets for every size class")
    p.add_argument("--runs", type=int, help="override runs for every size class")
    p.add_argument("--cold", action="store_true", help="also time reads with the cache dropped")
    p.add_argument("--seed", type=int)
    p.add_argument("-n", "--nthreads", type=int)
    p.add_argument("-o", "--out", default="bench_results.csv", help="CSV output path")
    p.add_argument("-v", "--verbose", action="store_true")
    ns = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(message)s")

    d = {}
    if ns.config:
        with open(ns.config) as f:
            d = json.load(f)
    for key, value in (("sizes", ns.sizes), ("entropies", ns.entropies),
                       ("storage", ns.storage), ("seed", ns.seed), ("n_threads", ns.nthreads)):
        if value is not None:
            d[key] = value
    if ns.cold:
        d["cold"] = True
    d["csv_path"] = ns.out
    cfg = BenchConfig.from_dict(d)
    if ns.sets or ns.runs:
        cfg.repeats = {k: (ns.sets or s, ns.runs or r) for k, (s, r) in cfg.repeats.items()}
    records = run_matrix(cfg)
    for r in records:
        status = r.error or (f"write {r.t_compress:.4f}s  hot read {r.t_decompress_hot:.4f}s  "
                             f"ratio {r.ratio:.3f}")
        print(f"{r.serializer:>11} {r.level} {r.size_class:>5} {r.entropy:>6}  {status}")
    print(f"wrote {len(records)} rows to {ns.out}")
    return 1 if any(r.error for r in records) else 0


if __name__ == "__main__":
    sys.exit(main())
