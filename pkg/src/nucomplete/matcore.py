"""Dense matrix primitives: SVD, norms, Hadamard algebra and the nuclear-norm prox.

Matrices are plain 2-d ``numpy.ndarray`` of floats.
"""
from __future__ import annotations

import io
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, DomainError, SolverFailure

RANK_TOL = 1e-9


class SvdFactors(NamedTuple):
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.values) @ self.right.T


class Norms(NamedTuple):
    frobenius: float
    operator: float
    infinity: float


def as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise DomainError(f"{name} has a non-finite entry at {bad}")
    return a


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def svd(m) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry
    is positive (ties go to the lowest index); the matching right vector is
    flipped with it.
    """
    a = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix") from exc
    v = vt.T
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivots, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return SvdFactors(u * signs, s, v * signs)


def singular_values(m) -> np.ndarray:
    a = as_matrix(m)
    try:
        # same LAPACK path as svd() so thresholds at sigma_1 agree bit for bit
        return np.linalg.svd(a, full_matrices=False)[1]
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix") from exc


def nuclear_norm(m) -> float:
    return float(np.sum(singular_values(m)))


def norms(m) -> Norms:
    a = as_matrix(m)
    return Norms(
        frobenius=float(np.sqrt(np.sum(a * a))),
        operator=float(singular_values(a)[0]),
        infinity=float(np.max(np.abs(a))),
    )


def numerical_rank(m, tol: float = RANK_TOL) -> int:
    """Count singular values above ``tol * sigma_1``; the zero matrix has rank 0."""
    s = singular_values(m)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def l2_pi_norm(m, p) -> float:
    r"""Sampling-weighted norm :math:`\sqrt{\sum_{jk} P_{jk} M_{jk}^2}`."""
    a = as_matrix(m)
    w = as_matrix(p, "p")
    _check_same_shape(a, w)
    if np.any(w < 0):
        bad = tuple(int(i) for i in np.argwhere(w < 0)[0])
        raise DomainError(f"negative probability at {bad}")
    return float(np.sqrt(np.sum(w * a * a)))


def hadamard(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b)
    return a * b


def hadamard_div(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b)
    zeros = np.argwhere(b == 0)
    if len(zeros):
        raise DomainError(f"zero divisor at {tuple(int(i) for i in zeros[0])}")
    return a / b


def elementwise_sqrt(a) -> np.ndarray:
    a = as_matrix(a)
    neg = np.argwhere(a < 0)
    if len(neg):
        raise DomainError(f"negative entry under square root at {tuple(int(i) for i in neg[0])}")
    return np.sqrt(a)


def soft_threshold_svd(m, tau: float, return_singular: bool = False):
    r"""Singular-value soft-thresholding, the prox of ``tau * ||.||_*``.

    Returns the unique minimiser of
    :math:`\tfrac12\|X - M\|_F^2 + \tau\|X\|_*`, i.e.
    ``U diag(max(sigma - tau, 0)) V^T``.  With ``return_singular`` the
    shrunk singular values are returned as well.
    """
    if tau < 0:
        raise DomainError(f"threshold must be non-negative, got {tau}")
    f = svd(m)
    shrunk = np.maximum(f.values - tau, 0.0)
    keep = shrunk > 0
    out = (f.left[:, keep] * shrunk[keep]) @ f.right[:, keep].T
    if return_singular:
        return out, shrunk
    return out


def prox_objective(x, m, tau: float) -> float:
    """Objective minimised by :func:`soft_threshold_svd`."""
    d = np.asarray(x, dtype=float) - np.asarray(m, dtype=float)
    return 0.5 * float(np.sum(d * d)) + tau * nuclear_norm(x)


def to_csv(m) -> str:
    """Headerless CSV, one row per line, full round-trip precision."""
    a = as_matrix(m)
    buf = io.StringIO()
    for row in a:
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    return buf.getvalue()


def from_csv(text: str) -> np.ndarray:
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    if not rows:
        raise DimensionError("empty matrix CSV")
    if len({len(r) for r in rows}) != 1:
        raise DimensionError("ragged matrix CSV")
    return as_matrix([[float(x) for x in r] for r in rows])


def save_csv(path, m) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(to_csv(m))


def load_csv(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return from_csv(fh.read())
