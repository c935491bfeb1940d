"""The four comparable estimation pipelines: Uniform, Margin, IPW+Uniform and NU-Recommend."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import sampling, solver
from .errors import ConfigurationError, DomainError, InfeasibleError
from .evaluation import relative_frobenius, select_lambda, split_indices
from .sampling import ObservationSet, SamplingEstimate
from .solver import FitResult, SolverConfig
from .weights import WeightConstructionConfig, construct_weights

log = logging.getLogger(__name__)

METHODS = ("uniform", "margin", "ipw_uniform", "nu_recommend")


@dataclass
class EstimatorSpec:
    method: str
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    weight_cfg: WeightConstructionConfig = field(default_factory=WeightConstructionConfig)
    sampling_method: str = "rank1"
    raw_method: str = "margin"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.sampling_method not in ("rank1", "pmlsvt"):
            raise ConfigurationError(f"unknown sampling method {self.sampling_method!r}")
        if self.raw_method not in ("uniform", "margin"):
            raise ConfigurationError(f"raw estimator must be 'uniform' or 'margin', got {self.raw_method!r}")


def _with_lambdas(cfg: SolverConfig, lambdas):
    return cfg if lambdas is None else replace(cfg, lambdas=list(lambdas))


def uniform_weights(shape) -> np.ndarray:
    return np.full(shape, 1.0 / (shape[0] * shape[1]))


def floored_margins(obs: ObservationSet):
    """Empirical margins with zeros raised to ``1/(2n)``."""
    est = sampling.estimate_rank1(obs)
    floor = 1.0 / (2 * len(obs))
    return np.maximum(est.row_margins, floor), np.maximum(est.col_margins, floor)


def margin_weights(obs: ObservationSet) -> np.ndarray:
    r, c = floored_margins(obs)
    return np.outer(r, c)


def estimate_sampling(obs: ObservationSet, method="rank1", seed=0) -> SamplingEstimate:
    """Strictly positive sampling estimate, by margins or by PMLSVT."""
    if method == "rank1":
        r, c = floored_margins(obs)
        return SamplingEstimate.from_matrix(np.outer(r, c), "rank1")
    est = sampling.select_pmlsvt(obs, seed=seed)
    floor = 1.0 / (2 * len(obs)) ** 2
    return SamplingEstimate.from_matrix(np.maximum(est.p_hat, floor), "pmlsvt", lam=est.lam)


def ipw_sample_weights(obs: ObservationSet, est: SamplingEstimate) -> np.ndarray:
    """Per-sample weights ``1/(d_r d_c P_hat)`` rescaled to mean one."""
    p = np.asarray(est.p_hat)[obs.rows, obs.cols]
    if np.any(p <= 0):
        i = int(np.flatnonzero(p <= 0)[0])
        raise DomainError(f"zero propensity at observed entry ({obs.rows[i]}, {obs.cols[i]})")
    omega = 1.0 / (obs.n_rows * obs.n_cols * p)
    return omega / omega.mean()


def fit_uniform(obs, cfg: SolverConfig | None = None) -> list[FitResult]:
    return solver.fit_path(obs, uniform_weights(obs.shape), cfg)


def fit_margin(obs, cfg: SolverConfig | None = None) -> list[FitResult]:
    return solver.fit_path(obs, margin_weights(obs), cfg)


def fit_ipw_uniform(obs, cfg: SolverConfig | None = None, sampling_est: SamplingEstimate | None = None):
    est = sampling_est if sampling_est is not None else estimate_sampling(obs, "rank1")
    return solver.fit_path(obs, uniform_weights(obs.shape), cfg,
                           sample_weights=ipw_sample_weights(obs, est))


def raw_estimate(obs, cfg: SolverConfig | None = None, raw_method="margin", b_star=None, seed=0):
    """Raw matrix estimate fed to the weight program.

    With ``b_star`` the penalty is chosen by oracle error; otherwise by
    validation RMSE on an internal 80/20 split, after which the full-data
    fit at the chosen penalty is returned.
    """
    fit = fit_margin if raw_method == "margin" else fit_uniform
    cfg = cfg or SolverConfig()
    fits = fit(obs, cfg)
    if b_star is not None:
        errs = [relative_frobenius(f.b_hat, b_star) for f in fits]
        return fits[int(np.argmin(errs))]
    if len(fits) == 1:
        return fits[0]
    rng = np.random.default_rng([seed, 0x8020])
    tr, va = split_indices(len(obs), 0.8, rng)
    inner = fit(obs.subset(tr), _with_lambdas(cfg, [f.lam for f in fits]))
    best, _ = select_lambda(inner, obs.subset(va))
    return fits[best]


def nu_recommend_weights(obs, cfg: SolverConfig | None = None,
                         weight_cfg: WeightConstructionConfig | None = None,
                         sampling_method="rank1", raw_method="margin", b_raw=None, b_star=None, seed=0):
    """Weight matrix of the NU-Recommend pipeline (steps 1-3)."""
    if b_raw is None:
        b_raw = raw_estimate(obs, cfg, raw_method, b_star, seed).b_hat
    est = estimate_sampling(obs, sampling_method, seed)
    try:
        return construct_weights(b_raw, est.p_hat, weight_cfg)
    except InfeasibleError as exc:
        raise InfeasibleError(f"{exc} (NU-Recommend: increase weight_cfg.gamma)", exc.indices) from exc


def fit_nu_recommend(obs, cfg: SolverConfig | None = None, weight_cfg: WeightConstructionConfig | None = None,
                     sampling_method="rank1", raw_method="margin", b_raw=None, b_star=None, seed=0):
    """Construct the NU-Recommend weights and solve the weighted problem over the path."""
    w = nu_recommend_weights(obs, cfg, weight_cfg, sampling_method, raw_method, b_raw, b_star, seed)
    return solver.fit_path(obs, w, cfg)


def run_estimator(spec: EstimatorSpec, obs, lambdas=None, b_star=None, b_raw=None, seed=0) -> list[FitResult]:
    """Dispatch on ``spec.method``; ``lambdas`` overrides the solver path."""
    cfg = _with_lambdas(spec.solver_cfg, lambdas)
    if spec.method == "uniform":
        return fit_uniform(obs, cfg)
    if spec.method == "margin":
        return fit_margin(obs, cfg)
    if spec.method == "ipw_uniform":
        return fit_ipw_uniform(obs, cfg, estimate_sampling(obs, spec.sampling_method, seed))
    # the raw estimate runs on the spec's own path, not the override
    w = nu_recommend_weights(obs, spec.solver_cfg, spec.weight_cfg, spec.sampling_method,
                             spec.raw_method, b_raw=b_raw, b_star=b_star, seed=seed)
    return solver.fit_path(obs, w, cfg)
