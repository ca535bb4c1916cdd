"""Weighted k-nearest-neighbour fingerprinting over flattened RSSI windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import LabeledSample, Location, RssiWindow, Run, Split, require_splits, windows_from_runs

DEFAULT_K = 10
KNN_EPS = 1e-9


@dataclass(frozen=True)
class FingerprintDb:
    """Feature rows (flattened B x H windows) with their locations, in insertion order."""

    features: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        loc = np.asarray(self.locations, dtype=np.float64)
        if f.ndim != 2 or loc.shape != (f.shape[0], 2):
            raise ValueError(f"features {f.shape} and locations {loc.shape} disagree")
        f.setflags(write=False)
        loc.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "locations", loc)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_samples(cls, samples: Iterable[LabeledSample]) -> "FingerprintDb":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        f = np.stack([s.window.values.ravel() for s in samples])
        loc = np.array([[s.location.x, s.location.y] for s in samples])
        return cls(f, loc)

    @classmethod
    def from_runs(cls, runs: Sequence[Run], history: int = 5) -> "FingerprintDb":
        require_splits(runs, {Split.TRAIN}, "fingerprint database")
        ws = windows_from_runs(list(runs), history, labeled=True)
        return cls(ws.x.reshape(len(ws), -1), ws.y)


def _features(query) -> np.ndarray:
    if isinstance(query, RssiWindow):
        return query.values.ravel().astype(np.float64)
    return np.asarray(query, dtype=np.float64).ravel()


def _weighted(dist: np.ndarray, order: np.ndarray, locations: np.ndarray, eps: float | None) -> np.ndarray:
    d = dist[order]
    if d[0] == 0.0:
        return locations[order[0]].copy()
    w = 1.0 / (np.maximum(d, eps) if eps is not None else d)
    return (w[:, None] * locations[order]).sum(axis=0) / w.sum()


def _check_k(db: FingerprintDb, k: int) -> None:
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(db) < k:
        raise ValueError(f"database holds {len(db)} entries, fewer than k={k}")


def knn_predict(db: FingerprintDb, query, k: int = DEFAULT_K, eps: float | None = KNN_EPS) -> Location:
    """Inverse-distance weighted mean of the k nearest locations.

    Ties at the k-th distance go to the earlier database entry. An exact
    match returns that entry's location. ``eps=None`` drops the guard.
    """
    _check_k(db, k)
    q = _features(query)
    if q.size != db.dim:
        raise ValueError(f"query has {q.size} features, database has {db.dim}")
    dist = np.sqrt(np.sum((db.features - q) ** 2, axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    out = _weighted(dist, order, db.locations, eps)
    return Location(float(out[0]), float(out[1]))


def knn_predict_many(
    db: FingerprintDb,
    queries: np.ndarray,
    k: int = DEFAULT_K,
    eps: float | None = KNN_EPS,
    chunk_bytes: int = 32 << 20,
) -> np.ndarray:
    """Row-wise ``knn_predict`` for an (N, ...) array of windows; returns (N, 2)."""
    _check_k(db, k)
    q = np.asarray(queries, dtype=np.float64).reshape(len(queries), -1)
    if q.shape[1] != db.dim:
        raise ValueError(f"queries have {q.shape[1]} features, database has {db.dim}")
    out = np.empty((q.shape[0], 2))
    step = max(1, chunk_bytes // max(1, 8 * db.features.size))
    for a in range(0, q.shape[0], step):
        block = q[a : a + step]
        dist = np.sqrt(np.sum((db.features[None, :, :] - block[:, None, :]) ** 2, axis=2))
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        for r in range(block.shape[0]):
            out[a + r] = _weighted(dist[r], order[r], db.locations, eps)
    return out


class KnnLocalizer:
    """Callable wrapper so the KNN baseline plugs into ``evaluate``."""

    def __init__(self, db: FingerprintDb, k: int = DEFAULT_K):
        _check_k(db, k)
        self.db = db
        self.k = k

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return knn_predict_many(self.db, x, self.k)
