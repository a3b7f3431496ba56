"""
Multi-label data
================

Each sample carries a set of labels.  Its target is the mean of its
classes' centers, and two items are relevant to each other when they
share at least one label.  nDCG grades by the number of shared labels.
"""

import numpy as np

from dcwh import codec, data as D, loss as L, metrics as M, trainer as T
from dcwh.index import build_index

combos = [[0], [1], [2], [3], [4], [5], [0, 1], [2, 3], [4, 5], [1, 3], [0, 5]]
ds = D.gen_multilabel_blobs(6, 80, 16, combos, spread=1.0, seed=3)
train_rows, query_rows, db_rows = D.split_indices(ds, D.SplitSpec(query_count=100, seed=3))
print(ds.labels[:3])

# %%
cfg = T.TrainConfig(L.LossConfig(16, 6, multilabel=True), seed=3)
result = T.train_full(ds.subset(train_rows), cfg)
print("sigma^2 =", cfg.loss.sigma_sq)

# %%
index = build_index(codec.encode(result.net, ds.features[db_rows]), db_rows)
judge = M.RelevanceJudge(ds.labels[query_rows], ds.labels[index.ids])
report = M.evaluate(codec.encode(result.net, ds.features[query_rows]), index, judge, 100,
                    precision_ks=(10, 100), ndcg_ks=(10, 100))
print(report.to_json())
