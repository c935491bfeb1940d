"""
Choosing a weight matrix from the error bound
=============================================

The weight program minimises ||Q o B_raw||_* over a box around sqrt(P_hat).
The normalised Q^2 is the weight.  The bound diagnostics compare the
candidates.
"""
import numpy as np

from nucomplete import dataio
from nucomplete.estimators import estimate_sampling, margin_weights, raw_estimate
from nucomplete.weights import WeightConstructionConfig, bound_diagnostics, closeness_l, construct_q, construct_weights

data = dataio.generate_synthetic(dataio.SyntheticSpec(d=20, rank_b=3, rank_p=3, n=1200, seed=3))
b_raw = raw_estimate(data.obs, b_star=data.b_star).b_hat
p_hat = estimate_sampling(data.obs).p_hat

cfg = WeightConstructionConfig(l_bound=3.0, gamma=3.0)
q, history = construct_q(b_raw, p_hat, cfg)
print(f"program value {history[0]:.4f} -> {history[-1]:.4f} in {len(history)} iterations")

w_nu = construct_weights(b_raw, p_hat, cfg)
# the box holds Q / sqrt(P_hat) in [1/3, 3], so W / P_hat may move by up to 3^4 after normalising
print("closeness of the weight to P_hat:", round(closeness_l(w_nu, p_hat), 3))

uniform = np.full(p_hat.shape, 1 / p_hat.size)
for name, w in [("uniform", uniform), ("margin", margin_weights(data.obs)), ("nu_recommend", w_nu)]:
    diag = bound_diagnostics(b_raw, w, p_hat, n=len(data.obs), sigma=1.0)
    print(f"{name:13s} l={diag.l:6.3f}  n*={diag.n_star:8.2f}  r~={diag.r_tilde:2d}  bound={diag.bound_value:.3e}")
