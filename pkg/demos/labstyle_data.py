"""
Loading and preprocessing real ratings
======================================

MovieLens-100K ``u.data`` is read when NUCOMPLETE_MOVIELENS points at it,
otherwise a small stand-in table is built.  Lab-style values get
log(1 + x) and per-column standardisation fitted on the training part.
"""
import os

import numpy as np

from nucomplete.dataio import RatingsTable, dense_submatrix, load_movielens, preprocess_labstyle

path = os.environ.get("NUCOMPLETE_MOVIELENS")
if path:
    table = load_movielens(path)
else:
    rng = np.random.default_rng(6)
    users = rng.zipf(1.6, 3000) % 200
    items = rng.zipf(1.4, 3000) % 300
    table = RatingsTable(users, items, rng.integers(1, 6, 3000).astype(float))

sub = dense_submatrix(table)
print(f"{len(table)} ratings -> dense submatrix {sub.obs.shape[0]} x {sub.obs.shape[1]} with {len(sub.obs)} ratings")

lab = sub.obs.with_values(np.exp(sub.obs.values))
train, test = lab.subset(np.arange(0, len(lab), 2)), lab.subset(np.arange(1, len(lab), 2))
tr, (te,), stats = preprocess_labstyle(train, test)
print(f"standardised train mean {tr.values.mean():+.2e}")
# a column with one training rating has its SD floored, so its test entries blow up
floored = stats.sd[te.cols] <= 1e-12
print(f"test median {np.median(te.values):+.3f}; {floored.sum()} test entries sit in floored-SD columns")
print("round trip max error:", float(np.max(np.abs(stats.invert(tr.values, tr.cols) - train.values))))
