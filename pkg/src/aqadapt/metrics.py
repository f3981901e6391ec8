"""Calibration performance indicators and error-series smoothing."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np


class MetricUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSet:
    mae: float
    mane: float
    mre: float
    rmse: float
    nrmse: float
    n: int
    n_mre: int

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_NAMES = ("mae", "mane", "mre", "rmse", "nrmse")


def compute_metrics(
    true: Sequence[float],
    pred: Sequence[float],
    mre_floor: float = 1.0,
    mane_norm: Literal["range", "mean"] = "range",
    nrmse_norm: Literal["std", "range", "mean"] = "std",
) -> MetricSet:
    """MAE, range-normalized MAE, MRE, RMSE and std-normalized RMSE.

    MRE only averages over samples whose true value is at least
    ``mre_floor`` ppb. ``std`` is the population standard deviation of the
    true values.
    """
    y = np.asarray(true, dtype=float)
    p = np.asarray(pred, dtype=float)
    if y.shape != p.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    if len(y) == 0:
        raise ValueError("no samples to score")
    e = p - y
    ae = np.abs(e)
    mae = float(ae.mean())
    # scale before squaring so tiny residuals do not underflow
    scale = float(np.max(np.abs(e)))
    rmse = scale * float(np.sqrt(np.mean((e / scale) ** 2))) if scale > 0 else 0.0

    eligible = y >= mre_floor
    if not eligible.any():
        raise MetricUndefinedError(f"no true value >= mre_floor={mre_floor}; MRE undefined")
    mre = float(np.mean(ae[eligible] / y[eligible]))

    norms = {"range": float(y.max() - y.min()), "mean": float(y.mean()), "std": float(y.std())}
    mane_d, nrmse_d = norms[mane_norm], norms[nrmse_norm]
    if not mane_d > 0:
        raise MetricUndefinedError(f"MAnE undefined: {mane_norm} of true values is {mane_d}")
    if not nrmse_d > 0:
        raise MetricUndefinedError(f"nRMSE undefined: {nrmse_norm} of true values is {nrmse_d}")
    return MetricSet(mae, mae / mane_d, mre, rmse, rmse / nrmse_d, len(y), int(eligible.sum()))


def smooth_series(errors: Sequence[float], window: int = 96) -> np.ndarray:
    """Centered moving average over +-window/2 samples, truncated at the ends."""
    x = np.asarray(errors, dtype=float)
    if x.size == 0:
        raise ValueError("cannot smooth an empty series")
    half = window // 2
    n = len(x)
    # summing offsets from the first sample keeps constant stretches exact
    ref = x[0]
    c = np.concatenate([[0.0], np.cumsum(x - ref)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return ref + (c[hi] - c[lo]) / (hi - lo)
