"""Packing numpy arrays to disk and reading them back.

Run with ``python demos/pack_arrays.py``; files go to a temporary directory.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

import chunkpack as cp
from chunkpack.bench import generate_dataset

tmp = Path(tempfile.mkdtemp())

# A smooth signal with a little noise, the kind of data that compresses well
# once the bytes of each float are grouped together.
t = np.linspace(0, 20 * np.pi, 2_000_000)
signal = np.sin(t) + np.random.default_rng(0).normal(scale=1e-3, size=t.size)

path = tmp / "signal.blp"
fi = cp.pack_ndarray_file(signal, path)
print(f"{signal.nbytes / 1e6:.1f} MB -> {path.stat().st_size / 1e6:.1f} MB "
      f"in {fi.header.nchunks} chunks")

back = cp.unpack_ndarray_file(path)
assert np.array_equal(back, signal)

# The descriptor lives in the metadata section as plain JSON.
print(json.loads(cp.file_info(path).metadata))

# Fortran-ordered and big-endian arrays are stored as they sit in memory:
# no transpose, no byte swap.
grid = np.asfortranarray(np.arange(12, dtype=">i8").reshape(3, 4))
blob = cp.pack_ndarray_bytes(grid)
again = cp.unpack_ndarray_bytes(blob)
print(again.dtype, again.flags.f_contiguous, np.array_equal(grid, again))

# Fixed-width byte strings work too.
names = np.array([b"alpha", b"beta", b"gamma"], dtype="S16")
print(cp.unpack_ndarray_bytes(cp.pack_ndarray_bytes(names)))

# How much the entropy of the data matters.
for kind in ("low", "medium", "high"):
    data = generate_dataset(kind, 1_000_000, seed=1)
    blob = cp.pack_ndarray_bytes(data)
    print(f"{kind:>6}: ratio {data.nbytes / len(blob):7.2f}")
