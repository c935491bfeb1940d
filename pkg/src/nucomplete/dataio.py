"""Synthetic data generation, MovieLens ingestion and lab-style preprocessing.

Random streams
--------------
Every random quantity comes from a Philox (64-bit counter-based) generator
keyed by ``SeedSequence(seed, spawn_key=(role,))``, one role per matrix or
noise source.  The factor matrices therefore do not depend on ``n``, and
changing the sample size only changes the sampling stream.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .sampling import ObservationSet, draw_observations

log = logging.getLogger(__name__)

ROLE_B_LEFT, ROLE_B_RIGHT, ROLE_P_LEFT, ROLE_P_RIGHT, ROLE_SAMPLES = range(5)
SD_FLOOR = 1e-12


def role_rng(seed: int, role: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(role,))))


@dataclass
class SyntheticSpec:
    d: int = 100
    rank_b: int = 20
    rank_p: int = 20
    noise_sd: float = 1.0
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ConfigurationError("d and n must be positive")
        if not (1 <= self.rank_b <= self.d and 1 <= self.rank_p <= self.d):
            raise ConfigurationError("ranks must lie in [1, d]")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be non-negative")


@dataclass
class SyntheticData:
    b_star: np.ndarray
    p_star: np.ndarray
    obs: ObservationSet


def synthetic_factors(spec: SyntheticSpec):
    """Uniform[0, 1] factor matrices ``(U_B, V_B, U_P, V_P)``."""
    shape_b = (spec.d, spec.rank_b)
    shape_p = (spec.d, spec.rank_p)
    return (role_rng(spec.seed, ROLE_B_LEFT).random(shape_b),
            role_rng(spec.seed, ROLE_B_RIGHT).random(shape_b),
            role_rng(spec.seed, ROLE_P_LEFT).random(shape_p),
            role_rng(spec.seed, ROLE_P_RIGHT).random(shape_p))


def generate_synthetic(spec: SyntheticSpec, factors=None) -> SyntheticData:
    """Low-rank preference and sampling matrices plus ``n`` noisy samples.

    ``factors`` replaces the random ``(U_B, V_B, U_P, V_P)``.
    """
    ub, vb, up, vp = factors if factors is not None else synthetic_factors(spec)
    b_star = ub @ vb.T
    p = up @ vp.T
    if np.any(p <= 0):
        raise DomainError("sampling matrix has a non-positive entry")
    p_star = p / p.sum()
    obs = draw_observations(p_star, b_star, spec.n, spec.noise_sd, role_rng(spec.seed, ROLE_SAMPLES))
    return SyntheticData(b_star, p_star, obs)


@dataclass
class RatingsTable:
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray | None = None

    def __len__(self):
        return len(self.values)


def load_movielens(path) -> RatingsTable:
    """Parse a tab-separated ``user item rating timestamp`` file (MovieLens ``u.data``)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"ratings file not found: {path}")
    users, items, vals, ts = [], [], [], []
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
                vals.append(float(parts[2]))
                ts.append(int(parts[3]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed line {line.strip()!r}") from exc
    if not vals:
        log.warning("ratings file %s is empty", path)
    return RatingsTable(np.array(users, dtype=np.int64), np.array(items, dtype=np.int64),
                        np.array(vals, dtype=float), np.array(ts, dtype=np.int64))


@dataclass
class Submatrix:
    obs: ObservationSet
    user_ids: np.ndarray
    item_ids: np.ndarray


def _kept(ids, quantile):
    uniq, counts = np.unique(ids, return_counts=True)
    if quantile <= 0:
        return uniq
    threshold = np.quantile(counts, quantile, method="lower")
    return uniq[counts >= threshold]


def dense_submatrix(table: RatingsTable, user_quantile=0.75, item_quantile=0.75) -> Submatrix:
    """Ratings among the most active users and most rated items.

    Thresholds are count quantiles over the full table; everyone tied at the
    threshold is kept.  Ids are re-indexed densely in ascending id order and
    the original ids are returned alongside.
    """
    if len(table) == 0:
        raise ConfigurationError("ratings table is empty")
    users = _kept(table.users, user_quantile)
    items = _kept(table.items, item_quantile)
    mask = np.isin(table.users, users) & np.isin(table.items, items)
    if not mask.any():
        raise ConfigurationError("no ratings survive the submatrix thresholds")
    u_ids = np.unique(table.users[mask])
    i_ids = np.unique(table.items[mask])
    rows = np.searchsorted(u_ids, table.users[mask])
    cols = np.searchsorted(i_ids, table.items[mask])
    obs = ObservationSet(len(u_ids), len(i_ids), rows, cols, table.values[mask])
    return Submatrix(obs, u_ids, i_ids)


@dataclass
class ColumnStats:
    mean: np.ndarray
    sd: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "sd": self.sd.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["sd"]))

    def apply(self, obs: ObservationSet) -> ObservationSet:
        """``log1p`` then standardise with these statistics."""
        if np.any(obs.values <= -1):
            raise DomainError("log(1 + x) needs every value > -1")
        z = (np.log1p(obs.values) - self.mean[obs.cols]) / self.sd[obs.cols]
        return obs.with_values(z)

    def invert(self, z, cols=None) -> np.ndarray:
        """Map standardised predictions (matrix, or vector with ``cols``) back to raw units."""
        z = np.asarray(z, dtype=float)
        if cols is None:
            return np.expm1(z * self.sd[None, :] + self.mean[None, :])
        return np.expm1(z * self.sd[cols] + self.mean[cols])


def average_duplicates(obs: ObservationSet) -> ObservationSet:
    """Collapse repeated ``(row, col)`` samples to their mean value."""
    flat = obs.rows * obs.n_cols + obs.cols
    uniq, inv = np.unique(flat, return_inverse=True)
    sums = np.bincount(inv, weights=obs.values)
    counts = np.bincount(inv)
    rows, cols = np.divmod(uniq, obs.n_cols)
    return ObservationSet(obs.n_rows, obs.n_cols, rows, cols, sums / counts)


def preprocess_labstyle(train: ObservationSet, *others: ObservationSet):
    """``log(1 + x)`` and per-column standardisation fitted on ``train`` only.

    Returns ``(transformed_train, [transformed_others...], stats)``.  Columns
    with no training sample get mean 0 and SD 1; constant columns get the SD
    floor.
    """
    if np.any(train.values <= -1) or any(np.any(o.values <= -1) for o in others):
        raise DomainError("log(1 + x) needs every value > -1")
    logv = np.log1p(train.values)
    counts = np.bincount(train.cols, minlength=train.n_cols)
    # shift by one sample per column so a constant column has an exact mean (its SD is floored
    # at 1e-12, which would magnify any rounding in the mean)
    ref = np.zeros(train.n_cols)
    ref[train.cols[::-1]] = logv[::-1]
    sums = np.bincount(train.cols, weights=logv - ref[train.cols], minlength=train.n_cols)
    mean = ref + np.divide(sums, counts, out=np.zeros(train.n_cols), where=counts > 0)
    sq = np.bincount(train.cols, weights=(logv - mean[train.cols]) ** 2, minlength=train.n_cols)
    var = np.divide(sq, counts, out=np.ones(train.n_cols), where=counts > 0)
    sd = np.maximum(np.sqrt(var), SD_FLOOR)
    stats = ColumnStats(mean, sd)
    return stats.apply(train), [stats.apply(o) for o in others], stats
