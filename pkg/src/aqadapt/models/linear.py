from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FEATURE_NAMES, Dataset
from ..preprocess import Standardizer


class SingularError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Multilinear calibration: 8 slopes on standardized features plus intercept."""

    weights: np.ndarray
    standardizer: Standardizer | None = None

    @property
    def slopes(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def intercept(self) -> float:
        return float(self.weights[-1])

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = self.standardizer.transform(X) if self.standardizer is not None else X
        return Z @ self.slopes + self.intercept


def ols_fit(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """Ordinary least squares with an intercept column appended to ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < k + 1:
        raise SingularError(f"need at least {k + 1} rows for {k} slopes plus intercept, got {n}")
    A = np.column_stack([X, np.ones(n)])
    w, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    if rank < k + 1:
        raise SingularError(f"design matrix rank {rank} < {k + 1} (smallest singular value {sv[-1]:.3g})")
    return LinearModel(w)


def fit_linear(data: Dataset) -> LinearModel:
    """Standardize features on ``data`` and fit OLS to its NO2 labels."""
    st = Standardizer.fit(data.features, FEATURE_NAMES)
    m = ols_fit(st.transform(data.features), data.ref_no2)
    return LinearModel(m.weights, st)
