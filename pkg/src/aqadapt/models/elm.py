"""
Radial-basis extreme learning machine.

The hidden layer (Gaussian units with one shared width) is drawn once and
frozen; only the linear output layer is fitted, by ridge regression, and
afterwards advanced tuple by tuple with recursive least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from ..core import FEATURE_NAMES, DataError, Dataset
from ..preprocess import Standardizer

ELM_HIDDEN_SIZES = (15, 25, 45)
MAX_CONDITION = 1e13


class ConditioningError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"ridge system ill-conditioned (condition estimate {cond:.3g})")
        self.cond = cond


class CovarianceError(np.linalg.LinAlgError):
    """RLS covariance lost positive definiteness; refit from scratch."""


@dataclass(frozen=True, eq=False)
class ElmModel:
    hidden_size: int
    centers: np.ndarray
    width: float
    weights: np.ndarray
    covariance: np.ndarray
    mu: float
    forgetting: float
    standardizer: Standardizer
    seed: int
    n_seen: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.forgetting <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {self.forgetting}")
        self.centers.flags.writeable = False

    def hidden(self, X: np.ndarray) -> np.ndarray:
        """Hidden activations with a trailing bias column."""
        Z = self.standardizer.transform(np.atleast_2d(X))
        return design(Z, self.centers, self.width)

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(X) @ self.weights


def design(Z: np.ndarray, centers: np.ndarray, width: float) -> np.ndarray:
    d2 = (
        np.sum(Z * Z, axis=1)[:, None]
        - 2.0 * Z @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    H = np.empty((len(Z), len(centers) + 1))
    H[:, :-1] = np.exp(-d2 / (2.0 * width * width))
    H[:, -1] = 1.0
    return H


def draw_hidden_layer(Z: np.ndarray, hidden_size: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Centers uniform in the bounding box of ``Z``; width = median center distance."""
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    centers = rng.uniform(lo, hi, size=(hidden_size, Z.shape[1]))
    width = float(np.median(pdist(centers))) if hidden_size > 1 else 1.0
    return centers, width


def _labeled(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    keep = np.isfinite(data.ref_no2)
    return data.features[keep], data.ref_no2[keep]


def elm_fit(
    data: Dataset,
    hidden_size: int,
    seed: int,
    mu: float = 1e-3,
    forgetting: float = 1.0,
    template: ElmModel | None = None,
) -> ElmModel:
    """Ridge fit of the output layer.

    With ``template`` the standardizer and hidden layer are reused and only
    the output layer is refitted; ``hidden_size`` and ``seed`` are then taken
    from the template.
    """
    X, y = _labeled(data)
    if template is not None:
        hidden_size, seed = template.hidden_size, template.seed
    if len(y) < hidden_size + 1:
        raise DataError(f"elm_fit needs >= {hidden_size + 1} labeled records, got {len(y)}")
    if template is None:
        st = Standardizer.fit(X, FEATURE_NAMES)
        rng = np.random.default_rng(seed)
        centers, width = draw_hidden_layer(st.transform(X), hidden_size, rng)
    else:
        st, centers, width = template.standardizer, template.centers, template.width
    H = design(st.transform(X), centers, width)
    A = H.T @ H + mu * np.eye(H.shape[1])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(float(cond))
    P = np.linalg.inv(A)
    P = 0.5 * (P + P.T)
    w = np.linalg.solve(A, H.T @ y)
    return ElmModel(
        hidden_size=hidden_size,
        centers=centers,
        width=width,
        weights=w,
        covariance=P,
        mu=mu,
        forgetting=forgetting,
        standardizer=st,
        seed=seed,
        n_seen=len(y),
    )


def elm_update(model: ElmModel, tuples: Dataset) -> ElmModel:
    """Advance output weights and covariance by RLS over ``tuples`` in time order."""
    X, y = _labeled(tuples)
    if len(y) == 0:
        return model
    order = np.argsort(tuples.timestamps[np.isfinite(tuples.ref_no2)], kind="stable")
    H = model.hidden(X[order])
    y = y[order]
    lam = model.forgetting
    P = model.covariance.copy()
    w = model.weights.copy()
    for h, target in zip(H, y):
        Ph = P @ h
        denom = lam + h @ Ph
        if not denom > 0 or not np.isfinite(denom):
            raise CovarianceError(f"non-positive RLS gain denominator {denom!r}")
        k = Ph / denom
        w += k * (target - h @ w)
        P -= np.outer(k, Ph)
        if lam != 1.0:
            P /= lam
    P = 0.5 * (P + P.T)
    if np.any(np.diag(P) <= 0):
        raise CovarianceError("RLS covariance has non-positive diagonal")
    return replace(model, weights=w, covariance=P, n_seen=model.n_seen + len(y))
