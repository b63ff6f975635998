"""kNN density-ratio weights between the training and deployment marginals.

The ratio p_dep / p_train at X is estimated from k-th neighbour radii in an
embedding of dimension p: ``(r_k(X; train) / r_k(X; dep)) ** p``. Raw weights
are normalised to unit mean over the query set and clipped.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DegenerateWeightError, ShapeError, SizeError

EMBEDDING_KINDS = ("summary_stats", "flat_subsample", "identity")


@dataclass(frozen=True)
class Embedding:
    kind: str = "summary_stats"
    n_points: int = 8

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise ValueError(f"unknown embedding {self.kind!r}; choose from {EMBEDDING_KINDS}")

    def dim(self, T: int, d: int) -> int:
        if self.kind == "summary_stats":
            return 3 * d
        if self.kind == "flat_subsample":
            return self.n_points * d
        return (T + 1) * d


def embed_batch(states, embedding: Embedding = Embedding()) -> np.ndarray:
    X = np.asarray(getattr(states, "states", states), dtype=float)
    if X.ndim == 2:
        X = X[None]
    n, L, d = X.shape
    if embedding.kind == "summary_stats":
        feats = np.stack([X.mean(axis=1), X.min(axis=1), X.max(axis=1)], axis=-1)
        return feats.reshape(n, 3 * d)
    if embedding.kind == "flat_subsample":
        idx = np.rint(np.linspace(0, L - 1, embedding.n_points)).astype(int)
        return X[:, idx, :].reshape(n, -1)
    return X.reshape(n, -1)


def embed(trajectory, embedding: Embedding = Embedding()) -> np.ndarray:
    """Fixed feature map of one trajectory.

    ``summary_stats`` gives (mean, min, max) for each state dimension, so two
    trajectories that differ at one interior step can share an embedding.
    """
    return embed_batch(trajectory, embedding)[0]


@dataclass(frozen=True)
class WeightConfig:
    k: int | None = None
    omega_min: float = 0.05
    omega_max: float = 20.0
    embedding: Embedding = field(default_factory=Embedding)

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 < self.omega_min <= 1 <= self.omega_max:
            raise ValueError("clip bounds must satisfy 0 < omega_min <= 1 <= omega_max")

    def resolve_k(self, n_reference: int) -> int:
        if self.k is not None:
            return self.k
        return max(1, math.isqrt(n_reference))


def knn_radii(queries: np.ndarray, reference: np.ndarray, k: int,
              query_ids: Sequence[str] | None = None,
              reference_ids: Sequence[str] | None = None) -> np.ndarray:
    """Distance from each query to its k-th nearest reference point.

    A reference point with the same id as the query is skipped; equal values
    under different ids are ordinary neighbours.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    R = np.atleast_2d(np.asarray(reference, dtype=float))
    if Q.shape[1] != R.shape[1]:
        raise ShapeError(f"query dim {Q.shape[1]} != reference dim {R.shape[1]}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dist = cdist(Q, R)
    available = np.full(len(Q), len(R))
    if query_ids is not None and reference_ids is not None:
        pos = {rid: j for j, rid in enumerate(reference_ids)}
        for i, qid in enumerate(query_ids):
            j = pos.get(qid)
            if j is not None:
                dist[i, j] = np.inf
                available[i] -= 1
    if np.any(available < k):
        raise SizeError(f"need at least k={k} reference points, have {int(available.min())}")
    # The k-th order statistic does not depend on how ties are broken.
    return np.partition(dist, k - 1, axis=1)[:, k - 1]


def knn_radius(x, reference, k: int, x_id: str | None = None,
               reference_ids: Sequence[str] | None = None) -> float:
    ids = None if x_id is None else [x_id]
    return float(knn_radii(np.atleast_2d(x), reference, k, ids, reference_ids)[0])


def _log_ratio(r_train: np.ndarray, r_dep: np.ndarray, p: int) -> np.ndarray:
    """``p * log(r_train / r_dep)`` with +inf for a zero deployment radius and
    0 when both radii vanish."""
    r_train = np.asarray(r_train, dtype=float)
    r_dep = np.asarray(r_dep, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p * (np.log(r_train) - np.log(r_dep))
    out = np.where((r_train == 0) & (r_dep == 0), 0.0, out)
    return out


def raw_weight(x, train_ref, dep_ref, k: int, p: int, x_id: str | None = None,
               train_ids=None, dep_ids=None) -> float:
    r_tr = knn_radius(x, train_ref, k, x_id, train_ids)
    r_dep = knn_radius(x, dep_ref, k, x_id, dep_ids)
    return float(np.exp(_log_ratio(r_tr, r_dep, p)))


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be a nonempty nonnegative vector")
    s2 = float(np.sum(w * w))
    if s2 == 0:
        raise ValueError("ESS undefined for all-zero weights")
    # Normalising first keeps huge weights from overflowing the squares.
    u = w / np.max(w)
    return float(np.sum(u) ** 2 / np.sum(u * u))


@dataclass
class WeightVector:
    ids: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray
    clipped: np.ndarray
    ess: float
    ess_ratio: float
    log_norm: float
    n_infinite: int = 0
    omega_min: float = 0.05
    omega_max: float = 20.0

    def __len__(self):
        return len(self.clipped)

    def summary(self) -> dict:
        w = self.clipped
        return {
            "n": len(w),
            "ess": self.ess,
            "ess_ratio": self.ess_ratio,
            "mean": float(np.mean(w)),
            "median": float(np.median(w)),
            "min": float(np.min(w)),
            "max": float(np.max(w)),
            "n_clipped_low": int(np.sum(self.normalized < self.omega_min)),
            "n_clipped_high": int(np.sum(self.normalized > self.omega_max)),
            "n_infinite": self.n_infinite,
        }

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["traj_id", "raw", "normalized", "clipped"])
            for row in zip(self.ids, self.raw, self.normalized, self.clipped):
                w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def _finish(ids, log_raw, cfg: WeightConfig, log_norm: float) -> WeightVector:
    inf = np.isposinf(log_raw)
    with np.errstate(over="ignore"):
        raw = np.exp(log_raw)
        norm = np.exp(log_norm)
        # Plain division when nothing overflows keeps e.g. 1/2 exact.
        linear = np.isfinite(raw) & np.isfinite(norm) & (norm > 0)
        scaled = np.where(linear, raw / np.where(linear, norm, 1.0), np.exp(log_raw - log_norm))
        normalized = np.where(inf, cfg.omega_max, scaled)
    clipped = np.clip(normalized, cfg.omega_min, cfg.omega_max)
    e = ess(clipped)
    return WeightVector(tuple(ids), raw, normalized, clipped, e, e / len(clipped), log_norm,
                        int(inf.sum()), cfg.omega_min, cfg.omega_max)


def _log_mean(log_raw: np.ndarray) -> float:
    kept = log_raw[~np.isposinf(log_raw)]
    if kept.size == 0:
        raise DegenerateWeightError("all raw weights are infinite (zero deployment radii)")
    if np.all(np.isneginf(kept)):
        raise DegenerateWeightError("all raw weights are zero")
    # Infinite sentinels are left out of the mean and mapped to omega_max.
    with np.errstate(over="ignore"):
        mean = float(np.mean(np.exp(kept)))
    if math.isfinite(mean) and mean > 0:
        return math.log(mean)
    return float(logsumexp(kept) - np.log(kept.size))


def normalize_and_clip(raw, cfg: WeightConfig = WeightConfig(),
                       ids: Sequence[str] | None = None) -> WeightVector:
    """Unit-mean normalisation followed by clipping to [omega_min, omega_max]."""
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0 or np.any(raw < 0) or np.any(np.isnan(raw)):
        raise ValueError("raw weights must be a nonempty nonnegative vector")
    if not np.any(raw > 0):
        raise DegenerateWeightError("all raw weights are zero")
    with np.errstate(divide="ignore"):
        log_raw = np.log(raw)
    ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(raw.size))
    return _finish(ids, log_raw, cfg, _log_mean(log_raw))


class DensityRatioEstimator:
    """Holds embedded train/dep reference sets for repeated weighting passes."""

    def __init__(self, train, dep, cfg: WeightConfig = WeightConfig(), features=None):
        self.cfg = cfg
        self.train_ids = tuple(train.ids)
        self.dep_ids = tuple(dep.ids)
        if features is None:
            self.train_f = embed_batch(train.states, cfg.embedding)
            self.dep_f = embed_batch(dep.states, cfg.embedding)
        else:
            self.train_f, self.dep_f = features
        self.p = self.train_f.shape[1]
        self.k = cfg.resolve_k(min(len(self.train_ids), len(self.dep_ids)))

    def log_raw(self, queries, query_features=None) -> np.ndarray:
        qf = embed_batch(queries.states, self.cfg.embedding) if query_features is None \
            else query_features
        r_tr = knn_radii(qf, self.train_f, self.k, queries.ids, self.train_ids)
        r_dep = knn_radii(qf, self.dep_f, self.k, queries.ids, self.dep_ids)
        return _log_ratio(r_tr, r_dep, self.p)

    def weights(self, queries, query_features=None) -> WeightVector:
        """Weights normalised to unit mean over ``queries`` itself."""
        log_raw = self.log_raw(queries, query_features)
        return _finish(queries.ids, log_raw, self.cfg, _log_mean(log_raw))

    def weights_like(self, queries, reference: WeightVector, query_features=None) -> WeightVector:
        """Weights on the normalisation scale of an existing vector, e.g. test
        points scored against the calibration weights."""
        log_raw = self.log_raw(queries, query_features)
        return _finish(queries.ids, log_raw, self.cfg, reference.log_norm)


def estimate_weights(queries, train, dep, cfg: WeightConfig = WeightConfig()) -> WeightVector:
    return DensityRatioEstimator(train, dep, cfg).weights(queries)
