"""Independent reference implementations used to check the package."""

from __future__ import annotations

import math

import numpy as np


def ols_oracle(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Slopes then intercept via the pseudo-inverse of the normal equations."""
    A = np.column_stack([X, np.ones(len(y))])
    w = np.linalg.pinv(A.T @ A) @ (A.T @ y)
    return np.r_[w[:-1], w[-1]]


def dbscan_noise_oracle(points: np.ndarray, eps: float, min_pts: int) -> set[int]:
    """O(n^2) DBSCAN noise set: neither core nor within eps of a core point."""
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    within = dist <= eps
    core = within.sum(axis=1) >= min_pts
    noise = set()
    for i in range(n):
        if core[i]:
            continue
        if not any(core[j] and within[i, j] for j in range(n)):
            noise.add(i)
    return noise


def metrics_oracle(true, pred, floor: float = 1.0) -> dict[str, float]:
    """Plain-loop MAE, MAnE (range), MRE, RMSE, nRMSE (population std)."""
    n = len(true)
    abs_sum = 0.0
    sq_sum = 0.0
    rel_sum = 0.0
    rel_n = 0
    for t, p in zip(true, pred):
        e = p - t
        abs_sum += abs(e)
        sq_sum += e * e
        if t >= floor:
            rel_sum += abs(e) / t
            rel_n += 1
    mean = sum(true) / n
    var = sum((t - mean) ** 2 for t in true) / n
    mae = abs_sum / n
    rmse = math.sqrt(sq_sum / n)
    return {
        "mae": mae,
        "mane": mae / (max(true) - min(true)),
        "mre": rel_sum / rel_n,
        "rmse": rmse,
        "nrmse": rmse / math.sqrt(var),
    }


def smooth_oracle(x, window: int) -> list[float]:
    half = window // 2
    n = len(x)
    out = []
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        out.append(sum(x[lo:hi]) / (hi - lo))
    return out


def grid_oracle(taus, pis, allow_equal: bool = False) -> list[tuple[int, int]]:
    pairs = []
    for t in taus:
        for p in pis:
            if p < t or (allow_equal and p == t):
                pairs.append((t, p))
    return sorted(pairs)


def blob_points(rng: np.random.Generator, n: int, dim: int = 9) -> np.ndarray:
    """A few Gaussian blobs plus scattered background points."""
    k = int(rng.integers(1, 4))
    centers = rng.uniform(-6, 6, size=(k, dim))
    n_bg = max(1, n // 10)
    sizes = rng.multinomial(n - n_bg, np.ones(k) / k)
    parts = [c + rng.normal(0, 0.6, size=(s, dim)) for c, s in zip(centers, sizes)]
    parts.append(rng.uniform(-9, 9, size=(n_bg, dim)))
    pts = np.concatenate(parts)
    return pts[rng.permutation(len(pts))]
