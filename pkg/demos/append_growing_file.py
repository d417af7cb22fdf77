"""Growing a compressed file in place.

A file written with offsets keeps spare slots for chunks added later.  Here a
simulated instrument appends one block of readings per "hour".
"""

import io
import tempfile
from pathlib import Path

import numpy as np

from chunkpack import PackArgs, append, file_info, pack_bytes, unpack_file
from chunkpack.errors import NoAppendSpace

CHUNK = 64 * 1024
rng = np.random.default_rng(3)


def hour_of_readings(hour):
    # CHUNK bytes exactly: appends must start on a chunk boundary
    base = 20.0 + 5 * np.sin(hour / 24 * 2 * np.pi)
    return (base + rng.normal(scale=0.05, size=CHUNK // 8)).astype("<f8").tobytes()


path = Path(tempfile.mkdtemp()) / "readings.blp"
first = hour_of_readings(0)
path.write_bytes(pack_bytes(first, PackArgs(chunk_size=CHUNK, max_app_chunks=5)))

expected = [first]
for hour in range(1, 10):
    block = hour_of_readings(hour)
    try:
        with open(path, "r+b") as f:
            n = append(f, io.BytesIO(block))
    except NoAppendSpace as e:
        print(f"hour {hour}: {e}")
        break
    expected.append(block)
    h = file_info(path).header
    print(f"hour {hour}: {n} chunks, {h.max_app_chunks} spare slots")

out = path.with_suffix(".raw")
unpack_file(path, out)
assert out.read_bytes() == b"".join(expected)
print("contents match what was appended")
