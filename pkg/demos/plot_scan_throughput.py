"""
Linear scan throughput
======================

Time an exhaustive Hamming scan over a million random 64-bit codes.
"""

import time

import numpy as np

from dcwh.codec import pack_rows
from dcwh.index import build_index

rng = np.random.default_rng(0)
n, bits = 1_000_000, 64
codes = pack_rows(rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, bits)))
index = build_index(codes, np.arange(n))
query = codes[123]

# %%
index.query_topk(query, 100)  # warm up
reps = 10
t0 = time.perf_counter()
for _ in range(reps):
    top = index.query_topk(query, 100)
per_query = (time.perf_counter() - t0) / reps
print(f"{n} codes x {bits} bits: {per_query * 1e3:.1f} ms per query, "
      f"{n / per_query / 1e6:.0f}M codes/s")
print("nearest:", top[:3])
