"""
Cross-validation and the per-row fairness regression
====================================================

Without ground truth the penalty is chosen on a validation split.  The
fairness regression asks whether rows that are observed more often get
smaller errors.
"""
from nucomplete import dataio
from nucomplete.estimators import EstimatorSpec
from nucomplete.evaluation import SplitPlan, cross_validate, fairness_regression
from nucomplete.sampling import estimate_rank1
from nucomplete.solver import SolverConfig

data = dataio.generate_synthetic(dataio.SyntheticSpec(d=25, rank_b=3, rank_p=3, noise_sd=0.5, n=1000, seed=5))
plan = SplitPlan(n_repeats=3, rng_seed=0)

for method in ("uniform", "nu_recommend"):
    rep = cross_validate(data.obs, EstimatorSpec(method, SolverConfig(n_lambdas=10)), plan, keep_estimates=True)
    s = rep.summary()[method]
    print(f"{method:13s} test RMSE {s['mean_rmse']:.4f} +/- {s['two_se']:.4f}")
    for rec in rep.records:
        train = data.obs.subset(rec.eval_idx)
        test = data.obs.subset(rec.test_idx)
        fr = fairness_regression(rec.b_hat, test, estimate_rank1(train), "rows")
        print(f"    repeat {rec.repeat}: slope {fr.slope:9.3f}  p-value {fr.p_value:.3f}")
