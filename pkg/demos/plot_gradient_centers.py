"""
Centers by gradient descent
===========================

Instead of recomputing class means once per epoch, centers can be free
parameters updated with the network at every step.  Compare both modes.
"""

import time

from dcwh import codec, data as D, loss as L, metrics as M, trainer as T
from dcwh.index import build_index

ds = D.gen_blobs(10, 120, 16, spread=1.0, seed=1)
train_rows, query_rows, db_rows = D.split_indices(ds, D.SplitSpec(query_per_class=20, seed=1))

# %%
for mode in ("periodic", "gradient"):
    cfg = T.TrainConfig(L.LossConfig(16, 10), center_mode=mode, seed=1)
    t0 = time.perf_counter()
    result = T.train_full(ds.subset(train_rows), cfg)
    index = build_index(codec.encode(result.net, ds.features[db_rows]), db_rows)
    judge = M.RelevanceJudge(ds.labels[query_rows], ds.labels[index.ids])
    m = M.mean_average_precision(codec.encode(result.net, ds.features[query_rows]),
                                 index, judge, 100)
    print(f"{mode:9s} MAP@100 {m:.4f}  ({time.perf_counter() - t0:.1f}s)")
