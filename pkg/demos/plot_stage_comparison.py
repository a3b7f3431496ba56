"""
What the second stage buys
==========================

The first stage keeps embeddings inside a cube; the second pulls them
toward cube vertices.  Compare the quantization error and the retrieval
quality of the binary codes after each stage.
"""

import numpy as np

from dcwh import codec, data as D, loss as L, metrics as M, trainer as T
from dcwh.index import build_index
from dcwh.net import embed, init_net

ds = D.gen_blobs(10, 120, 16, spread=1.0, seed=1)
train_rows, query_rows, db_rows = D.split_indices(ds, D.SplitSpec(query_per_class=20, seed=1))
train = ds.subset(train_rows)
cfg = T.TrainConfig(L.LossConfig(16, 10), seed=1)


def map_at_100(net):
    index = build_index(codec.encode(net, ds.features[db_rows]), db_rows)
    judge = M.RelevanceJudge(ds.labels[query_rows], ds.labels[index.ids])
    return M.mean_average_precision(codec.encode(net, ds.features[query_rows]), index, judge, 100)


# %%
net1, centers, log1 = T.train_stage1(init_net(cfg.layer_dims(ds.dim), cfg.seed), train, cfg)
net2, _, log2 = T.train_stage2(net1, centers, train, cfg, log1.iterations[-1][0] + 1)

for name, net in (("stage I", net1), ("stage II", net2)):
    r = embed(net, train.features)
    print(f"{name:9s} quant error {L.quantization_error(r):7.3f}   "
          f"mean |r| {np.abs(r).mean():.3f}   MAP@100 {map_at_100(net):.4f}")

# %%
# The logged quantization error per iteration shows the drop at the
# stage boundary.
q = np.concatenate([log1.column("quant_error"), log2.column("quant_error")])
print("iteration 0:", q[0], " end of I:", log1.column("quant_error")[-1], " end:", q[-1])
