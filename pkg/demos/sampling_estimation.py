"""
Estimating the sampling matrix
==============================

A product-form estimate (row margin times column margin) cannot
represent a non-product sampling matrix.  The Poisson low-rank estimate
(PMLSVT) can.
"""
import numpy as np

from nucomplete.sampling import counting_matrix, draw_observations, estimate_rank1, select_pmlsvt

# two user groups that prefer opposite item groups
p_star = np.kron([[0.2, 0.3], [0.3, 0.2]], np.full((10, 10), 0.01))
obs = draw_observations(p_star, np.zeros(p_star.shape), 10 ** 5, 0.0, rng_seed=1)
print("observations:", len(obs), "max count per cell:", int(counting_matrix(obs).max()))

rank1 = estimate_rank1(obs)
pm = select_pmlsvt(obs, seed=1)
print(f"rank-1 error  {np.linalg.norm(rank1.p_hat - p_star):.5f}")
print(f"PMLSVT error  {np.linalg.norm(pm.p_hat - p_star):.5f}")
print("PMLSVT block means:")
print(np.round(pm.p_hat.reshape(2, 10, 2, 10).sum(axis=(1, 3)), 4))
