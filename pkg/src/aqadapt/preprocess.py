"""Standardization and density-based outlier flagging."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import FEATURE_NAMES, DataError, Dataset, Flag

Space = Literal["features", "joint"]


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-dimension affine map to zero mean and unit sample std."""

    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] = ()

    @classmethod
    def fit(cls, X: np.ndarray, names: Sequence[str] = ()) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] < 2:
            raise DataError("need at least 2 rows to fit a standardizer")
        names = tuple(names) or tuple(f"dim{j}" for j in range(X.shape[1]))
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        zero = [names[j] for j in np.flatnonzero(~(std > 0))]
        if zero:
            raise DataError(f"zero-variance dimension(s): {', '.join(zero)}")
        return cls(mean, std, names)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), tuple(d["names"]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Standardizer)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
            and self.names == other.names
        )


def _space_matrix(d: Dataset, dims: Space) -> tuple[np.ndarray, tuple[str, ...]]:
    if dims == "features":
        return d.features, FEATURE_NAMES
    if dims == "joint":
        return np.column_stack([d.features, d.ref_no2]), (*FEATURE_NAMES, "ref_no2")
    raise ValueError(f"unknown space {dims!r}")


def fit_standardizer(d: Dataset, dims: Space = "features") -> Standardizer:
    """Fit on the dataset's non-outlier records (labeled ones for the joint space)."""
    keep = (d.flags & Flag.OUTLIER) == 0
    if dims == "joint":
        keep &= d.labeled
    X, names = _space_matrix(d.take(keep), dims)
    return Standardizer.fit(X, names)


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 1.0
    min_pts: int = 8
    space: Space = "joint"

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")
        if self.space not in ("features", "joint"):
            raise ValueError(f"unknown space {self.space!r}")


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Cluster ids per point, -1 for noise.

    A point is core when at least ``min_pts`` points (itself included) lie
    within Euclidean distance ``eps``. Clusters are grown from core points in
    index order; a border point joins the first cluster that reaches it.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if np.isinf(eps):
        return np.zeros(n, dtype=int) if n >= min_pts else np.full(n, -1)
    neighbors = cKDTree(points).query_ball_point(points, r=eps)
    core = np.fromiter((len(nb) >= min_pts for nb in neighbors), dtype=bool, count=n)
    labels = np.full(n, -1)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in sorted(neighbors[p]):
                if labels[q] == -1:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return labels


def dbscan_outliers(d: Dataset, p: DbscanParams = DbscanParams()) -> Dataset:
    """Flag DBSCAN noise points as OUTLIER in standardized space.

    In the joint space only labeled records take part; unlabeled ones are left
    untouched.
    """
    candidates = np.flatnonzero(d.labeled) if p.space == "joint" else np.arange(len(d))
    if len(candidates) < p.min_pts:
        raise DataError(f"{len(candidates)} candidate records is fewer than min_pts={p.min_pts}")
    sub = d.take(candidates)
    X, names = _space_matrix(sub, p.space)
    Z = Standardizer.fit(X, names).transform(X)
    noise = candidates[dbscan_labels(Z, p.eps, p.min_pts) == -1]
    flags = d.flags.copy()
    flags[noise] |= int(Flag.OUTLIER)
    return d.replace(flags=flags)
