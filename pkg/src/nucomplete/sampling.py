"""Non-uniform sampling: observation sets, counting matrix and sampling-matrix estimators."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import DegenerateInputError, DimensionError, DomainError, SolverFailure

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ObservationSet:
    """Samples ``(row, col, value)`` on a ``n_rows x n_cols`` grid; repeats allowed."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if self.n_rows < 1 or self.n_cols < 1:
            raise DimensionError(f"grid must be at least 1x1, got {self.n_rows}x{self.n_cols}")
        if not (len(rows) == len(cols) == len(values)):
            raise DimensionError("rows, cols and values must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= self.n_rows
                          or cols.min() < 0 or cols.max() >= self.n_cols):
            raise DimensionError("sample index out of bounds")
        if not np.all(np.isfinite(values)):
            raise DomainError("observation values must be finite")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_triples(cls, shape, triples):
        triples = list(triples)
        if not triples:
            return cls(shape[0], shape[1], [], [], [])
        r, c, v = zip(*triples)
        return cls(shape[0], shape[1], r, c, v)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def __len__(self):
        return len(self.values)

    def subset(self, idx) -> "ObservationSet":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.int64)
        return ObservationSet(self.n_rows, self.n_cols, self.rows[idx], self.cols[idx], self.values[idx])

    def with_values(self, values) -> "ObservationSet":
        return ObservationSet(self.n_rows, self.n_cols, self.rows, self.cols, values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for r, c, v in zip(self.rows, self.cols, self.values):
            w.writerow([int(r), int(c), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, shape=None) -> "ObservationSet":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["row", "col", "value"]:
            raise DimensionError(f"expected header row,col,value, got {header}")
        rows, cols, vals = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                r, c, v = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError) as exc:
                raise DomainError(f"malformed observation on line {lineno}: {rec}") from exc
            rows.append(r)
            cols.append(c)
            vals.append(v)
        if shape is None:
            shape = (max(rows, default=0) + 1, max(cols, default=0) + 1)
        return cls(shape[0], shape[1], rows, cols, vals)


def _require_nonempty(obs: ObservationSet):
    if len(obs) == 0:
        raise DegenerateInputError("observation set is empty")


def counting_matrix(obs: ObservationSet) -> np.ndarray:
    """``M[j, k]`` = number of samples that landed on entry ``(j, k)``."""
    _require_nonempty(obs)
    flat = np.bincount(obs.rows * obs.n_cols + obs.cols, minlength=obs.n_rows * obs.n_cols)
    return flat.reshape(obs.shape).astype(float)


@dataclass
class SamplingEstimate:
    p_hat: np.ndarray
    row_margins: np.ndarray
    col_margins: np.ndarray
    method: str
    lam: float | None = None
    unnormalized: np.ndarray | None = None
    objective_trace: list = field(default_factory=list)
    n_iterations: int = 0

    @classmethod
    def from_matrix(cls, p, method, **kw) -> "SamplingEstimate":
        p = np.asarray(p, dtype=float)
        total = p.sum()
        if total <= 0:
            raise DegenerateInputError("sampling matrix has no mass")
        p = p / total
        return cls(p, p.sum(axis=1), p.sum(axis=0), method, **kw)


def estimate_rank1(obs: ObservationSet) -> SamplingEstimate:
    """Product-distribution estimate from empirical row and column margins."""
    m = counting_matrix(obs)
    n = m.sum()
    r = m.sum(axis=1) / n
    c = m.sum(axis=0) / n
    return SamplingEstimate(np.outer(r, c), r, c, "rank1")


def poisson_cost(x, m) -> float:
    """Poisson negative log-likelihood over observed entries (constants dropped)."""
    obs = m > 0
    xo = np.maximum(x[obs], LOG_FLOOR)
    return float(np.sum(xo) - np.sum(m[obs] * np.log(xo)))


def poisson_grad(x, m) -> np.ndarray:
    obs = m > 0
    g = np.zeros_like(x)
    g[obs] = 1.0 - m[obs] / np.maximum(x[obs], LOG_FLOOR)
    return g


def _rescale_to_count(z, n):
    zp = np.maximum(z, 0.0)
    s = zp.sum()
    if s <= 0:
        return np.full_like(z, n / z.size)
    return (n / s) * zp


def pmlsvt_counts(m, lambdas, eta=2.0, t0=None, max_iter=500, tol=1e-5,
                  project=True, max_backtracks=60):
    """Run the Poisson singular-value-thresholding iteration on a count matrix.

    Returns a list of ``(X, objective_trace, n_iterations)`` per penalty, with
    ``X`` unnormalised.  ``t`` is an inverse step size: the gradient step is
    ``X - grad/t`` and singular values are shrunk by ``lam/t``.  A step that
    raises the penalised cost is retried with ``t *= eta``.  With
    ``project=False`` the rescaling onto total count ``n`` is skipped, which
    leaves the plain proximal-gradient fixed point.  ``t0=None`` starts from
    ``1 / max(M)``.
    """
    m = np.asarray(m, dtype=float)
    n = m.sum()
    if n <= 0:
        raise DegenerateInputError("counting matrix is all zero")
    if eta <= 1:
        raise DomainError(f"eta must exceed 1, got {eta}")
    if t0 is None:
        # curvature of the cost at X = M is 1/M, so 1/max(M) is the flattest direction
        t0 = 1.0 / m.max()
    x = m.copy()
    out = []
    for lam in lambdas:
        t = float(t0)

        def cost(z):
            return poisson_cost(z, m) + lam * matcore.nuclear_norm(z)

        fx = cost(x)
        trace = [fx]
        k = 0
        for k in range(1, max_iter + 1):
            grad = poisson_grad(x, m)
            for _ in range(max_backtracks):
                z = matcore.soft_threshold_svd(x - grad / t, lam / t)
                x_new = _rescale_to_count(z, n) if project else np.maximum(z, 0.0)
                f_new = cost(x_new)
                if not np.isfinite(f_new):
                    raise SolverFailure(f"non-finite Poisson cost at lambda={lam}")
                if f_new <= fx:
                    break
                t *= eta
            else:
                log.debug("pmlsvt: no decrease after %d backtracks at lambda=%g", max_backtracks, lam)
                break
            done = abs(fx - f_new) < tol
            x, fx = x_new, f_new
            trace.append(fx)
            if done:
                break
        out.append((x.copy(), trace, k))
    return out


def default_pmlsvt_lambdas(shape, n):
    """Descending grid around the operator norm of the score noise at the truth.

    Entries of ``1 - M/X`` at ``X = nP`` have standard deviation about
    ``sqrt(d_r d_c / n)``, so the noise operator norm is roughly that times
    ``sqrt(d_r) + sqrt(d_c)``.
    """
    dr, dc = shape
    base = np.sqrt(dr * dc / n) * (np.sqrt(dr) + np.sqrt(dc))
    return [base * 2.0 ** e for e in range(4, -5, -1)]


def estimate_pmlsvt(obs: ObservationSet, lambdas=None, eta=2.0, t0=None, max_iter=500,
                    project=True) -> list[SamplingEstimate]:
    """Low-rank Poisson estimate of the sampling matrix, one per penalty.

    Penalties are visited in the given order with warm starts.
    """
    m = counting_matrix(obs)
    if lambdas is None:
        lambdas = default_pmlsvt_lambdas(m.shape, m.sum())
    lambdas = list(lambdas)
    if not lambdas:
        raise DomainError("need at least one penalty")
    res = pmlsvt_counts(m, lambdas, eta=eta, t0=t0, max_iter=max_iter, project=project)
    return [
        SamplingEstimate.from_matrix(x, "pmlsvt", lam=lam, unnormalized=x,
                                     objective_trace=trace, n_iterations=k)
        for lam, (x, trace, k) in zip(lambdas, res)
    ]


def select_pmlsvt(obs: ObservationSet, lambdas=None, holdout=0.1, seed=0, **kw) -> SamplingEstimate:
    """PMLSVT with the penalty picked by held-out Poisson likelihood.

    Samples are thinned at random into a fit part and a ``holdout`` part.
    Binomial thinning of Poisson counts keeps both parts Poisson, so the
    held-out counts are scored against the rate ``holdout * n * P_hat``.
    """
    _require_nonempty(obs)
    # separate stream from any sampler seeded with the same integer
    rng = np.random.default_rng([seed, 0x7E57])
    mask = rng.random(len(obs)) < holdout
    if mask.all() or not mask.any():
        mask = np.zeros(len(obs), dtype=bool)
        mask[0] = True
    fit_part, held = obs.subset(~mask), obs.subset(mask)
    n_fit = len(fit_part)
    if lambdas is None:
        lambdas = default_pmlsvt_lambdas(obs.shape, len(obs))
    lambdas = list(lambdas)
    # rescale the grid to the fit-part sample size
    scale = n_fit / len(obs)
    cands = estimate_pmlsvt(fit_part, [lam * scale for lam in lambdas], **kw)
    mh = counting_matrix(held)
    nh = mh.sum()
    scores = []
    for est in cands:
        rate = np.maximum(nh * est.p_hat, LOG_FLOOR)
        scores.append(float(np.sum(mh * np.log(rate)) - np.sum(rate)))
    best = int(np.argmax(scores))
    log.info("pmlsvt: held-out log-likelihoods %s, picked lambda=%g", scores, lambdas[best])
    return estimate_pmlsvt(obs, lambdas[: best + 1], **kw)[-1]


def draw_observations(p, ground_truth, n: int, noise_sd: float, rng_seed) -> ObservationSet:
    """Draw ``n`` i.i.d. entries from ``p`` and add Gaussian noise to the true values."""
    p = matcore.as_matrix(p, "p")
    b = matcore.as_matrix(ground_truth, "ground_truth")
    if p.shape != b.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {b.shape}")
    if np.any(p < 0):
        raise DomainError(f"negative probability at {tuple(int(i) for i in np.argwhere(p < 0)[0])}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"sampling probabilities sum to {p.sum()!r}, not 1")
    if n < 1:
        raise DomainError("need at least one sample")
    if noise_sd < 0:
        raise DomainError("noise_sd must be non-negative")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    flat = p.ravel()
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, flat.size - 1)
    rows, cols = np.divmod(idx, p.shape[1])
    values = b[rows, cols] + (noise_sd * rng.standard_normal(n) if noise_sd > 0 else 0.0)
    return ObservationSet(p.shape[0], p.shape[1], rows, cols, values)
