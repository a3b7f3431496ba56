"""
Effect of the Gaussian variance
===============================

A larger variance spreads class centers further apart and makes each
class tighter around its center.  Train with several values and report
both quantities for the embeddings after both stages.

The default learning rate of 0.001 leaves these small runs far from
convergence, where the ordering can come out the other way; a step of
0.05 gives a clear picture in a few seconds.
"""

from dcwh import data as D, loss as L, trainer as T
from dcwh.net import embed

ds = D.gen_blobs(10, 120, 16, spread=1.0, seed=1)
train_rows, _, _ = D.split_indices(ds, D.SplitSpec(query_per_class=20, seed=1))
train = ds.subset(train_rows)

# %%
print("sigma^2   intra-class var   inter-center dist")
for s in (0.5, 1.0, 2.0):
    cfg = T.TrainConfig(L.LossConfig(16, 10, sigma_sq=s), lr=0.05, stage1_epochs=200, seed=1)
    net = T.train_full(train, cfg).net
    r = embed(net, train.features)
    centers = T.compute_centers(net, train, cfg)
    print(f"{s:7.1f}   {T.intra_class_variance(r, train):15.4f}   "
          f"{T.inter_class_distance(centers):17.3f}")
