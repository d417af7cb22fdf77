"""A small benchmark run: every serializer on every entropy class.

The full protocol (``blpk-bench``) uses 10^7 elements and 5 x 5 repetitions
for the mid size class; this uses 10^6 elements and 2 x 2 so it finishes in
well under a minute.
"""

import tempfile

from chunkpack.bench import BenchConfig, run_matrix

cfg = BenchConfig(
    sizes=["mid"],
    size_elements={"small": 10**4, "mid": 10**6, "large": 2 * 10**8},
    repeats={"small": (10, 10), "mid": (2, 2), "large": (3, 3)},
    storage=[tempfile.mkdtemp()],
)
records = run_matrix(cfg)

print(f"{'serializer':>11} {'lvl':>3} {'entropy':>7} {'write s':>9} {'read s':>9} "
      f"{'ratio':>8}  beats plain")
for r in records:
    print(f"{r.serializer:>11} {r.level:3d} {r.entropy:>7} {r.t_compress:9.4f} "
          f"{r.t_decompress_hot:9.4f} {r.ratio:8.2f}  {r.beats_plain}")
