"""Weight matrices: closeness to the sampling matrix, the weight-construction
program, and the error-bound ingredients used to compare candidate weights."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import matcore
from .errors import ConfigurationError, DimensionError, DomainError, InfeasibleError

log = logging.getLogger(__name__)

PATIENCE = 200


@dataclass
class WeightConstructionConfig:
    """Hyper-parameters of the weight program.

    ``l_bound`` caps the ratio between ``Q`` and ``sqrt(P_hat)`` in both
    directions, ``gamma`` caps ``max |Q o B_hat|``.  ``step_size`` is the
    Frobenius length of the first subgradient step relative to
    ``||sqrt(P_hat)||_F``; later steps shrink like ``1/sqrt(t)``.
    """

    l_bound: float = 3.0
    gamma: float = 3.0
    step_size: float = 0.2
    max_iter: int = 2000
    tol: float = 1e-6

    def __post_init__(self):
        if self.l_bound < 1:
            raise ConfigurationError(f"l_bound must be >= 1, got {self.l_bound}")
        if self.gamma <= 0 or self.step_size <= 0 or self.max_iter < 1 or self.tol <= 0:
            raise ConfigurationError("gamma, step_size, tol must be positive and max_iter >= 1")


def _positive(m, name):
    a = matcore.as_matrix(m, name)
    bad = np.argwhere(a <= 0)
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        raise DomainError(f"{name} must be strictly positive; entry {idx} is {a[idx]}")
    return a


def closeness_l(w, p) -> float:
    """Smallest ``l`` with ``1/l <= P/W <= l`` entrywise."""
    w = _positive(w, "w")
    p = _positive(p, "p")
    if w.shape != p.shape:
        raise DimensionError(f"shape mismatch: {w.shape} vs {p.shape}")
    # both ratios computed directly so that closeness_l(w, p) == closeness_l(p, w) bit for bit
    return float(max(np.max(p / w), np.max(w / p)))


def weight_box(b_raw, p_hat, l_bound, gamma):
    """Entrywise bounds on ``Q``; raises if some lower bound exceeds its upper bound."""
    b = matcore.as_matrix(b_raw, "b_raw")
    p = _positive(p_hat, "p_hat")
    if b.shape != p.shape:
        raise DimensionError(f"shape mismatch: {b.shape} vs {p.shape}")
    root = np.sqrt(p)
    lo = root / l_bound
    hi = l_bound * root
    absb = np.abs(b)
    nz = absb > 0
    hi[nz] = np.minimum(hi[nz], gamma / absb[nz])
    bad = np.argwhere(lo > hi * (1 + 1e-12))
    if len(bad):
        idx = [tuple(int(i) for i in r) for r in bad]
        raise InfeasibleError(
            f"weight program infeasible at {len(idx)} entries (first {idx[:5]}): "
            f"sqrt(p_hat)/l * |b_raw| exceeds gamma={gamma}; raise gamma",
            idx,
        )
    return lo, np.maximum(hi, lo)


def construct_q(b_raw, p_hat, cfg: WeightConstructionConfig | None = None):
    """Projected subgradient descent on ``||Q o B_hat||_*`` over the box.

    Returns ``(Q, objective_history)`` where ``Q`` is the best iterate seen and
    the history records the best objective after every step.
    """
    cfg = cfg or WeightConstructionConfig()
    b = matcore.as_matrix(b_raw, "b_raw")
    lo, hi = weight_box(b, p_hat, cfg.l_bound, cfg.gamma)
    q = np.clip(np.sqrt(np.asarray(p_hat, dtype=float)), lo, hi)
    if np.all(hi - lo <= 0):
        return q, [matcore.nuclear_norm(q * b)]
    scale = cfg.step_size * np.linalg.norm(q)
    best_q = q.copy()
    best = matcore.nuclear_norm(q * b)
    history = [best]
    for t in range(1, cfg.max_iter + 1):
        f = matcore.svd(q * b)
        keep = f.values > matcore.RANK_TOL * max(f.values[0], 1e-300)
        g = (f.left[:, keep] @ f.right[:, keep].T) * b
        gnorm = np.linalg.norm(g)
        if gnorm == 0:
            break
        q = np.clip(q - (scale / np.sqrt(t)) * g / gnorm, lo, hi)
        val = matcore.nuclear_norm(q * b)
        if val < best:
            best, best_q = val, q.copy()
        history.append(best)
        if t > PATIENCE and history[-PATIENCE - 1] - best <= cfg.tol * max(best, 1e-300):
            break
    return best_q, history


def construct_weights(b_raw, p_hat, cfg: WeightConstructionConfig | None = None) -> np.ndarray:
    """Weight matrix ``W = Q^2 / sum(Q^2)`` from the solution of the weight program."""
    q, _ = construct_q(b_raw, p_hat, cfg)
    w = q * q
    return w / w.sum()


@dataclass
class BoundDiagnostics:
    l: float
    p_min: float
    n_star: float
    r_tilde: int
    bound_value: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def bound_value(l, p_min, n_star, r_tilde, d, n, sigma, rho) -> float:
    """Error-bound expression with the leading constant set to one."""
    return float(max(sigma ** 2, n_star ** 2) * d * rho * l ** 4 * r_tilde / (n * p_min))


def bound_diagnostics(b, w, p, n: int, sigma: float, rho: float | None = None) -> BoundDiagnostics:
    """Ingredients of the prediction-error bound for weight ``w`` on matrix ``b``.

    ``d`` is taken as ``max(d_r, d_c)`` and the spikiness uses ``d_r * d_c``
    in place of ``d^2``.  ``rho`` defaults to ``log d``.
    """
    b = matcore.as_matrix(b, "b")
    l = closeness_l(w, p)
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    if b.shape != w.shape:
        raise DimensionError(f"shape mismatch: {b.shape} vs {w.shape}")
    if n < 1:
        raise DomainError("n must be at least 1")
    d = max(b.shape)
    rho = np.log(d) if rho is None else rho
    if rho < np.log(d) - 1e-12:
        raise DomainError(f"rho must be at least log d = {np.log(d):.4g}")
    nw = np.sqrt(w) * b
    n_star = float(b.shape[0] * b.shape[1] * np.max(np.abs(nw)))
    r_tilde = matcore.numerical_rank(nw) if np.any(nw) else 0
    p_min = float(p.min())
    return BoundDiagnostics(l, p_min, n_star, r_tilde,
                            bound_value(l, p_min, n_star, r_tilde, d, n, sigma, rho))
