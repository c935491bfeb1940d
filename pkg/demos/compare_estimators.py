"""
Four estimators on one synthetic problem
========================================

Uniform, Margin, IPW+Uniform and NU-Recommend, each with the penalty that
minimises the error against the known ground truth.
"""
from nucomplete import dataio
from nucomplete.estimators import EstimatorSpec, run_estimator
from nucomplete.evaluation import relative_frobenius, relative_l2pi
from nucomplete.solver import SolverConfig

data = dataio.generate_synthetic(dataio.SyntheticSpec(d=30, rank_b=5, rank_p=5, n=800, seed=4))
for method in ("uniform", "margin", "ipw_uniform", "nu_recommend"):
    fits = run_estimator(EstimatorSpec(method, SolverConfig(n_lambdas=15)), data.obs, b_star=data.b_star)
    best = min(fits, key=lambda f: relative_frobenius(f.b_hat, data.b_star))
    print(f"{method:13s} lambda {best.lam:.4f}  rel frobenius {relative_frobenius(best.b_hat, data.b_star):.4f}"
          f"  rel L2(pi) {relative_l2pi(best.b_hat, data.b_star, data.p_star):.4f}")
