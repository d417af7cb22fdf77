"""What the shuffle filter and the compression level do.

Consecutive integers barely compress as raw bytes, because every eighth byte
changes.  Grouping byte 0 of each element, then byte 1, and so on turns the
high bytes into long runs of zeros.
"""

import time

import numpy as np

from chunkpack.codec import CodecParams, compress_chunk, shuffle

x = np.arange(131072, dtype="<i8")
raw = x.tobytes()

print("first 16 bytes:          ", raw[:16].hex(" "))
print("first 16 shuffled bytes: ", shuffle(8, raw)[:16].hex(" "))
print("bytes 7*m .. 7*m+16:     ", shuffle(8, raw)[7 * x.size:7 * x.size + 16].hex(" "))

for shuffle_on in (False, True):
    for level in (1, 3, 7, 9):
        p = CodecParams(level=level, shuffle=shuffle_on, typesize=8)
        start = time.perf_counter()
        frame = compress_chunk(p, raw)
        ms = 1e3 * (time.perf_counter() - start)
        print(f"shuffle={shuffle_on!s:5} level={level} block={p.block_size_for(len(raw)):6d}"
              f"  ratio {len(raw) / len(frame):7.2f}  {ms:6.2f} ms")

# Typesize has to match the element size for the filter to help.
for typesize in (1, 2, 4, 8):
    frame = compress_chunk(CodecParams(level=7, typesize=typesize), raw)
    print(f"typesize {typesize}: ratio {len(raw) / len(frame):.2f}")
