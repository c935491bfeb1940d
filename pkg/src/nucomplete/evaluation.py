"""Error metrics, the cross-validation protocol and the row/column fairness regression."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import matcore
from .errors import ConfigurationError, DomainError, InsufficientDataError
from .sampling import ObservationSet, SamplingEstimate


def relative_frobenius(b_hat, b_star) -> float:
    b_star = matcore.as_matrix(b_star, "b_star")
    den = np.linalg.norm(b_star)
    if den == 0:
        raise DomainError("ground truth is zero; relative error undefined")
    return float(np.linalg.norm(np.asarray(b_hat, dtype=float) - b_star) / den)


def relative_l2pi(b_hat, b_star, p) -> float:
    den = matcore.l2_pi_norm(b_star, p)
    if den == 0:
        raise DomainError("ground truth vanishes on the support of p; relative error undefined")
    return matcore.l2_pi_norm(np.asarray(b_hat, dtype=float) - np.asarray(b_star, dtype=float), p) / den


def test_rmse(b_hat, test_obs: ObservationSet) -> float:
    if len(test_obs) == 0:
        raise InsufficientDataError("test set is empty")
    r = test_obs.values - np.asarray(b_hat)[test_obs.rows, test_obs.cols]
    return float(np.sqrt(np.mean(r * r)))


test_rmse.__test__ = False  # not a pytest test when imported into a test module


@dataclass
class SplitPlan:
    eval_fraction: float = 0.8
    test_fraction: float = 0.2
    inner_train_fraction: float = 0.8
    n_repeats: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("eval_fraction", "test_fraction", "inner_train_fraction"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {v}")
        if abs(self.eval_fraction + self.test_fraction - 1) > 1e-12:
            raise ConfigurationError("eval_fraction + test_fraction must equal 1")
        if self.n_repeats < 1:
            raise ConfigurationError("n_repeats must be positive")

    def repeat_rng(self, repeat: int) -> np.random.Generator:
        return np.random.default_rng([self.rng_seed, repeat])


def split_indices(n: int, fraction: float, rng: np.random.Generator):
    """Random partition of ``range(n)`` into sorted (first, second) with ``round(fraction*n)`` first."""
    perm = rng.permutation(n)
    k = int(round(fraction * n))
    first, second = np.sort(perm[:k]), np.sort(perm[k:])
    if len(first) == 0 or len(second) == 0:
        raise ConfigurationError(f"split of {n} samples at fraction {fraction} leaves an empty part")
    return first, second


@dataclass
class RepeatRecord:
    method: str
    repeat: int
    lam: float
    test_rmse: float
    val_rmse: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    b_hat: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    eval_idx: np.ndarray | None = None


@dataclass
class ExperimentReport:
    records: list

    def by_method(self) -> dict:
        out = {}
        for r in self.records:
            out.setdefault(r.method, []).append(r)
        return out

    def summary(self) -> dict:
        out = {}
        for method, recs in self.by_method().items():
            vals = np.array([r.test_rmse for r in sorted(recs, key=lambda r: r.repeat)])
            se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
            out[method] = {"mean_rmse": float(vals.mean()), "two_se": float(2 * se), "n_repeats": len(vals)}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "repeat", "lambda", "test_rmse"])
        for r in sorted(self.records, key=lambda r: (r.method, r.repeat)):
            w.writerow([r.method, r.repeat, repr(float(r.lam)), repr(float(r.test_rmse))])
        return buf.getvalue()

    def summary_json(self, fairness=None) -> str:
        summ = self.summary()
        for method, fr in (fairness or {}).items():
            summ.setdefault(method, {})["fairness"] = {"slope": fr.slope, "p_value": fr.p_value}
        return json.dumps(summ, indent=2, sort_keys=True)


def select_lambda(results, val_obs: ObservationSet):
    """Index of the fit with the lowest validation RMSE and the list of RMSEs."""
    scores = [test_rmse(f.b_hat, val_obs) for f in results]
    return int(np.argmin(scores)), scores


def cross_validate(obs: ObservationSet, spec, plan: SplitPlan, keep_estimates=False,
                   preprocess=None) -> ExperimentReport:
    """Test RMSE per repeat after validation-based penalty selection.

    Each repeat draws its own eval/test split of the samples, splits the eval
    part again into train/validation, picks the penalty with the lowest
    validation RMSE, refits on the whole eval part at that penalty and scores
    it on the test part.
    """
    return ExperimentReport([
        cv_repeat(obs, spec, plan, rep, keep_estimates, preprocess) for rep in range(plan.n_repeats)
    ])


def cv_repeat(obs: ObservationSet, spec, plan: SplitPlan, rep: int, keep_estimates=False,
              preprocess=None) -> RepeatRecord:
    """One repeat of :func:`cross_validate`.

    ``preprocess(fit_part, *others)`` must return ``(fit_part, others, stats)``
    with statistics learned from ``fit_part`` only; it is applied once to
    (eval, test) and once to (train, validation).
    """
    from .estimators import run_estimator

    rng = plan.repeat_rng(rep)
    eval_idx, test_idx = split_indices(len(obs), plan.eval_fraction, rng)
    inner_tr, inner_val = split_indices(len(eval_idx), plan.inner_train_fraction, rng)
    train_idx, val_idx = eval_idx[inner_tr], eval_idx[inner_val]
    if np.intersect1d(eval_idx, test_idx).size:
        raise AssertionError("test samples leaked into the evaluation part")
    eval_obs, test_obs = obs.subset(eval_idx), obs.subset(test_idx)
    train_obs, val_obs = obs.subset(train_idx), obs.subset(val_idx)
    if preprocess is not None:
        eval_obs, (test_obs,), _ = preprocess(eval_obs, test_obs)
        train_obs, (val_obs,), _ = preprocess(train_obs, val_obs)

    seed = int(rng.integers(2 ** 31))
    full_fits = run_estimator(spec, eval_obs, seed=seed)
    lambdas = [f.lam for f in full_fits]
    inner_fits = run_estimator(spec, train_obs, lambdas=lambdas, seed=seed)
    best, scores = select_lambda(inner_fits, val_obs)
    chosen = full_fits[best]
    return RepeatRecord(
        method=spec.method,
        repeat=rep,
        lam=chosen.lam,
        test_rmse=test_rmse(chosen.b_hat, test_obs),
        val_rmse=scores,
        lambdas=lambdas,
        b_hat=chosen.b_hat if keep_estimates else None,
        test_idx=test_idx,
        eval_idx=eval_idx,
    )


@dataclass
class FairnessResult:
    slope: float
    intercept: float
    slope_se: float
    t_stat: float
    p_value: float
    axis: str
    n_points: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def ols_slope_test(x, y, axis="rows") -> FairnessResult:
    """Simple linear regression of ``y`` on ``x`` with a two-sided t-test on the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = len(x)
    if k < 3:
        raise InsufficientDataError(f"need at least 3 points for the regression, got {k}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= k * (1e-12 * float(np.abs(x).max())) ** 2:
        raise ConfigurationError("regressor has zero variance")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    df = k - 2
    s2 = float(resid @ resid) / df
    se = float(np.sqrt(s2 / sxx))
    if se == 0:
        t = 0.0 if slope == 0 else float(np.copysign(np.inf, slope))
        p = 1.0 if slope == 0 else 0.0
    else:
        t = slope / se
        p = float(2 * stats.t.sf(abs(t), df))
    return FairnessResult(slope, intercept, se, t, p, axis, k)


def per_group_rmse(b_hat, test_obs: ObservationSet, axis="rows"):
    """RMSE of ``b_hat`` on the test samples of each row (or column); empty groups are dropped."""
    idx = test_obs.rows if axis == "rows" else test_obs.cols
    size = test_obs.n_rows if axis == "rows" else test_obs.n_cols
    r = test_obs.values - np.asarray(b_hat)[test_obs.rows, test_obs.cols]
    counts = np.bincount(idx, minlength=size)
    sse = np.bincount(idx, weights=r * r, minlength=size)
    keep = np.flatnonzero(counts)
    return keep, np.sqrt(sse[keep] / counts[keep])


def fairness_regression(b_hat, test_obs: ObservationSet, sampling: SamplingEstimate, axis="rows") -> FairnessResult:
    """Regress per-row (per-column) test RMSE on the estimated row (column) margin."""
    if axis not in ("rows", "cols"):
        raise ConfigurationError(f"axis must be 'rows' or 'cols', got {axis!r}")
    keep, err = per_group_rmse(b_hat, test_obs, axis)
    margins = sampling.row_margins if axis == "rows" else sampling.col_margins
    if len(keep) < 3:
        raise InsufficientDataError(f"only {len(keep)} {axis} have test observations; need 3")
    return ols_slope_test(np.asarray(margins)[keep], err, axis)
