"""
Train a hashing network and retrieve by Hamming distance
========================================================

Generate a small Gaussian-cluster dataset, train the two-stage model,
encode queries and database items as 16-bit codes, and measure MAP@100.
"""

import time

import numpy as np

from dcwh import codec, data as D, loss as L, metrics as M, trainer as T
from dcwh.index import build_index

# %%
# Ten classes of 120 points each in 16 dimensions.  Twenty points per class
# are held out as queries and the rest form the database and training set.
ds = D.gen_blobs(10, 120, 16, spread=1.0, seed=1)
train_rows, query_rows, db_rows = D.split_indices(ds, D.SplitSpec(query_per_class=20, seed=1))
print(len(train_rows), "train /", len(query_rows), "queries /", len(db_rows), "database")

# %%
# Default settings: two hidden layers of 64, lr 0.001, batch 64,
# 300 epochs with the cube hinge then 100 with the vertex penalty.
cfg = T.TrainConfig(L.LossConfig(16, 10), seed=1)
t0 = time.perf_counter()
result = T.train_full(ds.subset(train_rows), cfg)
print(f"trained in {time.perf_counter() - t0:.1f}s, sigma^2 = {cfg.loss.sigma_sq}")

# %%
# Encode and index.  Ids are dataset row numbers.
db_codes = codec.encode(result.net, ds.features[db_rows])
q_codes = codec.encode(result.net, ds.features[query_rows])
index = build_index(db_codes, db_rows)

hits = index.query_topk(q_codes[0], 5)
print("query", query_rows[0], "label", ds.labels[query_rows[0]])
for hit_id, dist in hits:
    print(f"  id {hit_id:5d}  dist {dist:2d}  label {ds.labels[hit_id]}")

# %%
# Evaluate.
judge = M.RelevanceJudge(ds.labels[query_rows], ds.labels[index.ids])
report = M.evaluate(q_codes, index, judge, 100, precision_ks=(1, 10, 100), ndcg_ks=(100,))
print(report.to_json())
