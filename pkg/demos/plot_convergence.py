"""
Convergence against code length
===============================

Longer codes give the loss more room.  Track when a 20-iteration moving
average of the first-stage loss first falls below half its starting value.
"""

import numpy as np

from dcwh import data as D, loss as L, trainer as T
from dcwh.net import init_net

ds = D.gen_blobs(10, 120, 16, spread=1.0, seed=1)
train_rows, _, _ = D.split_indices(ds, D.SplitSpec(query_per_class=20, seed=1))
train = ds.subset(train_rows)

# %%
for bits in (12, 24, 48):
    cfg = T.TrainConfig(L.LossConfig(bits, 10, sigma_sq=1.0), seed=1)
    _, _, log = T.train_stage1(init_net(cfg.layer_dims(ds.dim), cfg.seed), train, cfg)
    s = np.convolve(log.column("loss"), np.ones(20) / 20, mode="valid")
    below = np.flatnonzero(s < 0.5 * s[0])
    when = int(below[0]) + 19 if below.size else None
    print(f"{bits:2d} bits: start {s[0]:.3f}  end {s[-1]:.4f}  half-loss at iteration {when}")
