"""
Singular-value thresholding and matrix norms
============================================

The prox of tau * ||.||_* shrinks every singular value by tau.
"""
import numpy as np

from nucomplete import matcore

rng = np.random.default_rng(0)
m = rng.standard_normal((4, 3))

print("singular values:", np.round(matcore.singular_values(m), 4))
print("norms (nuclear, frobenius, operator, max):", matcore.norms(m))

# shrink by the middle singular value: only the top one survives
tau = matcore.singular_values(m)[1]
x, shrunk = matcore.soft_threshold_svd(m, tau, return_singular=True)
print("shrunk singular values:", np.round(shrunk, 4), "rank", matcore.numerical_rank(x))

# the prox output beats random perturbations of itself
best = matcore.prox_objective(x, m, tau)
worse = [matcore.prox_objective(x + 0.01 * rng.standard_normal(x.shape), m, tau) for _ in range(1000)]
print(f"prox objective {best:.6f}, best random perturbation {min(worse):.6f}")

# a threshold at the top singular value gives the zero matrix exactly
print("zero at tau = sigma_1:", np.all(matcore.soft_threshold_svd(m, matcore.norms(m).operator) == 0))
