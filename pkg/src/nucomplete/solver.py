"""Weighted trace-norm penalized regression over a decreasing penalty path.

The problem

    min_B  (1/n) sum_i w_i (y_i - B[j_i, k_i])^2 + lam * ||sqrt(W) o B||_*

is solved in the variable ``N = sqrt(W) o B``, where the penalty becomes a
plain nuclear norm and the sampling operator picks ``N[j, k] / sqrt(W[j, k])``.
Proximal gradient steps use singular-value soft-thresholding with a
backtracking/forthtracking line search; each penalty is warm-started from the
previous one.  The per-sample loss weights ``w_i`` default to one; they are
only used for inverse-propensity weighting.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import ConfigurationError, DegenerateInputError, DimensionError, DomainError
from .sampling import ObservationSet

log = logging.getLogger(__name__)

MAX_FORTHTRACK = 40
MAX_BACKTRACK = 80


@dataclass
class SolverConfig:
    """Solver settings.  ``lambdas=None`` builds a log-spaced path from the data."""

    lambdas: list | None = None
    beta: float = 0.5
    t_init: float = 1.0
    tol: float = 1e-8
    max_iter: int = 2000
    n_lambdas: int = 30
    lambda_ratio: float = 1e-3

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConfigurationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.t_init <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("t_init and tol must be positive, max_iter >= 1")
        if self.lambdas is not None:
            lams = [float(x) for x in self.lambdas]
            if not lams:
                raise ConfigurationError("lambdas must be non-empty")
            if any(x <= 0 for x in lams):
                raise ConfigurationError("lambdas must be positive")
            if any(a <= b for a, b in zip(lams, lams[1:])):
                raise ConfigurationError("lambdas must be strictly decreasing")
            self.lambdas = lams

    def path(self, lam_max: float) -> list:
        if self.lambdas is not None:
            return list(self.lambdas)
        if lam_max <= 0:
            raise DegenerateInputError("all observations are zero; the path collapses at lambda = 0")
        return list(np.geomspace(lam_max, lam_max * self.lambda_ratio, self.n_lambdas))


@dataclass
class FitResult:
    b_hat: np.ndarray
    lam: float
    objective_trace: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    n_iterations: int = 0
    converged: bool = False
    n_hat: np.ndarray | None = None

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    def metadata(self) -> dict:
        return {
            "lambda": self.lam,
            "iterations": self.n_iterations,
            "converged": self.converged,
            "final_objective": self.final_objective,
        }

    def save(self, stem) -> None:
        """Write ``<stem>.csv`` (the estimate) and ``<stem>.json`` (metadata)."""
        matcore.save_csv(f"{stem}.csv", self.b_hat)
        with open(f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def apply_design(b, obs: ObservationSet) -> np.ndarray:
    """Entries of ``b`` at the sampled positions, one per sample."""
    b = np.asarray(b, dtype=float)
    if b.shape != obs.shape:
        raise DimensionError(f"matrix shape {b.shape} does not match observations {obs.shape}")
    return b[obs.rows, obs.cols]


def adjoint_design(v, obs: ObservationSet) -> np.ndarray:
    """Scatter-add ``v[i]`` onto position ``(j_i, k_i)``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (len(obs),):
        raise DimensionError(f"expected a vector of length {len(obs)}, got shape {v.shape}")
    flat = np.bincount(obs.rows * obs.n_cols + obs.cols, weights=v, minlength=obs.n_rows * obs.n_cols)
    return flat.reshape(obs.shape)


def _check_weights(w, shape) -> np.ndarray:
    w = matcore.as_matrix(w, "w")
    if w.shape != shape:
        raise DimensionError(f"weight shape {w.shape} does not match observations {shape}")
    if np.any(w <= 0):
        bad = tuple(int(i) for i in np.argwhere(w <= 0)[0])
        raise DomainError(f"weights must be strictly positive; entry {bad} is {w[bad]}")
    return w


def _sample_weights(sample_weights, n):
    if sample_weights is None:
        return None
    sw = np.asarray(sample_weights, dtype=float)
    if sw.shape != (n,) or np.any(sw < 0) or not np.all(np.isfinite(sw)):
        raise DomainError("sample weights must be a finite non-negative vector, one per sample")
    return sw


def weighted_objective(b, obs: ObservationSet, w, lam: float, sample_weights=None) -> float:
    """Penalized least squares ``(1/n)||Y - X(B)||^2 + lam ||sqrt(W) o B||_*``."""
    w = _check_weights(w, obs.shape)
    if len(obs) == 0:
        raise DegenerateInputError("observation set is empty")
    r = obs.values - apply_design(b, obs)
    sw = _sample_weights(sample_weights, len(obs))
    loss = np.mean(r * r) if sw is None else np.mean(sw * r * r)
    return float(loss + lam * matcore.nuclear_norm(np.sqrt(w) * np.asarray(b, dtype=float)))


class _Problem:
    """Smooth part ``g(N)`` in the rescaled variable."""

    def __init__(self, obs: ObservationSet, w, sample_weights=None):
        self.obs = obs
        self.n = len(obs)
        self.y = obs.values
        self.flat = obs.rows * obs.n_cols + obs.cols
        self.size = obs.n_rows * obs.n_cols
        self.sqrt_w = np.sqrt(w)
        self.scale = 1.0 / self.sqrt_w[obs.rows, obs.cols]
        self.sw = _sample_weights(sample_weights, self.n)
        # g is a diagonal quadratic; steps past 1/(smallest positive curvature) are
        # justified only by flat directions and just amplify rounding in N - t*grad
        unit = np.ones(self.n) if self.sw is None else self.sw
        curv = (2.0 / self.n) * np.bincount(self.flat, weights=unit * self.scale ** 2, minlength=self.size)
        pos = curv[curv > 0]
        self.t_max = float(1.0 / pos.min()) if len(pos) else np.inf

    def forward(self, nmat):
        return nmat.ravel()[self.flat] * self.scale

    def adjoint(self, v):
        return np.bincount(self.flat, weights=v * self.scale, minlength=self.size).reshape(self.obs.shape)

    def value(self, nmat):
        r = self.forward(nmat) - self.y
        if self.sw is not None:
            return float(np.dot(self.sw * r, r) / self.n)
        return float(np.dot(r, r) / self.n)

    def curvature(self, d):
        """Second-order term ``g(N + D) - g(N) - <grad g(N), D>``; exact since g is quadratic."""
        r = self.forward(d)
        if self.sw is not None:
            return float(np.dot(self.sw * r, r) / self.n)
        return float(np.dot(r, r) / self.n)

    def grad(self, nmat):
        r = self.forward(nmat) - self.y
        if self.sw is not None:
            r = self.sw * r
        return (2.0 / self.n) * self.adjoint(r)

    def lambda_max(self):
        return float(matcore.norms(self.grad(np.zeros(self.obs.shape))).operator)


def lambda_max(obs: ObservationSet, w, sample_weights=None) -> float:
    """Smallest penalty at which the solution is exactly zero."""
    w = _check_weights(w, obs.shape)
    return _Problem(obs, w, sample_weights).lambda_max()


def _line_search(prob, nmat, grad, lam, cfg):
    """Pick a step per the sufficient-decrease rule; returns (t, N_next, shrunk sigmas)."""
    cache = {}

    def trial(t):
        if t not in cache:
            nxt, sig = matcore.soft_threshold_svd(nmat - t * grad, lam * t, return_singular=True)
            # g(N - t G) <= g(N) - t<grad, G> + (t/2)||G||^2 with D = -t G; for quadratic g the
            # first-order terms cancel exactly, which avoids rounding when both sides are ~g(N)
            d = nxt - nmat
            ok = prob.curvature(d) <= 0.5 * np.vdot(d, d) / t
            cache[t] = (bool(ok), nxt, sig)
        return cache[t]

    t = cfg.t_init
    if not trial(t)[0]:
        for _ in range(MAX_BACKTRACK):
            t *= cfg.beta
            if trial(t)[0]:
                break
    else:
        for _ in range(MAX_FORTHTRACK):
            if t / cfg.beta > prob.t_max or not trial(t / cfg.beta)[0]:
                break
            t /= cfg.beta
        # t is now the last step that passed, i.e. the failing step times beta
    _, nxt, sig = trial(t)
    return t, nxt, sig


def fit_path(obs: ObservationSet, w, cfg: SolverConfig | None = None, sample_weights=None,
             n_init=None) -> list[FitResult]:
    """Solve the weighted problem for every penalty on the path, largest first."""
    cfg = cfg or SolverConfig()
    if len(obs) == 0:
        raise DegenerateInputError("observation set is empty")
    w = _check_weights(w, obs.shape)
    prob = _Problem(obs, w, sample_weights)
    lams = cfg.path(prob.lambda_max())
    nmat = np.zeros(obs.shape) if n_init is None else np.array(n_init, dtype=float)
    results = []
    for lam in lams:
        gval = prob.value(nmat)
        trace = [gval + lam * matcore.nuclear_norm(nmat)]
        steps = []
        converged = False
        it = 0
        for it in range(1, cfg.max_iter + 1):
            grad = prob.grad(nmat)
            t, nxt, sig = _line_search(prob, nmat, grad, lam, cfg)
            diff = nxt - nmat
            nmat = nxt
            gval = prob.value(nmat)
            trace.append(gval + lam * float(sig.sum()))
            steps.append(t)
            if np.vdot(diff, diff) <= cfg.tol:
                converged = True
                break
        if not converged:
            log.warning("fit_path: lambda=%g hit max_iter=%d without converging", lam, cfg.max_iter)
        results.append(FitResult(
            b_hat=nmat / prob.sqrt_w,
            lam=float(lam),
            objective_trace=trace,
            step_sizes=steps,
            n_iterations=it,
            converged=converged,
            n_hat=nmat.copy(),
        ))
    return results
