"""
Shallow tanh network trained by Levenberg-Marquardt with Bayesian
regularization (evidence re-estimation of the weight-decay and noise
precisions), monitored by early stopping on a held-out split.

The objective is ``F = beta * E_D + alpha * E_W`` with ``E_D`` the sum of
squared errors (standardized target units) and ``E_W`` the sum of squares of
every weight and bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core import FEATURE_NAMES, DataError, Dataset
from ..preprocess import Standardizer

SNN_HIDDEN_SIZES = (3, 5, 7)
N_IN = len(FEATURE_NAMES)


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class SnnConfig:
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.25
    # False keeps alpha/beta at their initial values (plain regularized LM).
    bayesian: bool = True
    alpha0: float | None = None
    beta0: float | None = None
    mu0: float = 0.005
    mu_dec: float = 0.1
    mu_inc: float = 10.0
    mu_max: float = 1e10
    mu_min: float = 1e-20
    min_grad: float = 1e-7
    min_records: int = 40


def n_params(hidden: int, n_in: int = N_IN) -> int:
    return hidden * n_in + 2 * hidden + 1


def unpack(theta: np.ndarray, hidden: int, n_in: int = N_IN):
    k = hidden * n_in
    W1 = theta[:k].reshape(hidden, n_in)
    b1 = theta[k : k + hidden]
    w2 = theta[k + hidden : k + 2 * hidden]
    b2 = theta[k + 2 * hidden]
    return W1, b1, w2, b2


def init_params(hidden: int, rng: np.random.Generator, n_in: int = N_IN) -> np.ndarray:
    """Nguyen-Widrow style initialization for standardized inputs."""
    W1 = rng.uniform(-1.0, 1.0, size=(hidden, n_in))
    scale = 0.7 * hidden ** (1.0 / n_in)
    W1 *= scale / np.linalg.norm(W1, axis=1, keepdims=True)
    b1 = rng.uniform(-scale, scale, size=hidden)
    w2 = rng.uniform(-0.5, 0.5, size=hidden)
    b2 = rng.uniform(-0.5, 0.5)
    return np.concatenate([W1.ravel(), b1, w2, [b2]])


def forward(theta: np.ndarray, X: np.ndarray, hidden: int) -> np.ndarray:
    W1, b1, w2, b2 = unpack(theta, hidden, X.shape[1])
    return np.tanh(X @ W1.T + b1) @ w2 + b2


def jacobian_t(theta: np.ndarray, XT: np.ndarray, hidden: int) -> tuple[np.ndarray, np.ndarray]:
    """Network output and transposed Jacobian (params x samples) for inputs ``XT`` (features x samples)."""
    n_in, n = XT.shape
    W1, b1, w2, b2 = unpack(theta, hidden, n_in)
    AT = np.tanh(W1 @ XT + b1[:, None])
    out = w2 @ AT + b2
    DT = (1.0 - AT * AT) * w2[:, None]
    k = hidden * n_in
    JT = np.empty((n_params(hidden, n_in), n))
    # written in place: a broadcast temporary here dominated training time
    np.multiply(DT[:, None, :], XT[None, :, :], out=JT[:k].reshape(hidden, n_in, n))
    JT[k : k + hidden] = DT
    JT[k + hidden : k + 2 * hidden] = AT
    JT[-1] = 1.0
    return out, JT


def jacobian(theta: np.ndarray, X: np.ndarray, hidden: int) -> tuple[np.ndarray, np.ndarray]:
    """Network output and its Jacobian (samples x params)."""
    out, JT = jacobian_t(theta, np.ascontiguousarray(X.T), hidden)
    return out, JT.T


@dataclass(frozen=True, eq=False)
class SnnModel:
    hidden_size: int
    theta: np.ndarray
    alpha: float
    beta: float
    standardizer: Standardizer
    seed: int
    epochs: int = 0
    best_epoch: int = 0
    val_history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.hidden_size not in SNN_HIDDEN_SIZES:
            raise ValueError(f"hidden_size must be one of {SNN_HIDDEN_SIZES}")

    @property
    def best_val_mse(self) -> float:
        return self.val_history[self.best_epoch] if self.val_history else float("nan")

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        st = self.standardizer
        Z = (X - st.mean[:N_IN]) / st.std[:N_IN]
        return forward(self.theta, Z, self.hidden_size) * st.std[N_IN] + st.mean[N_IN]


def snn_gradient(
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    hidden: int,
    alpha: float,
    beta: float,
) -> np.ndarray:
    """Backpropagated gradient of ``beta*sum(e^2) + alpha*sum(theta^2)``."""
    W1, b1, w2, b2 = unpack(theta, hidden, X.shape[1])
    A = np.tanh(X @ W1.T + b1)
    e = A @ w2 + b2 - y
    d_out = 2.0 * beta * e
    g_w2 = A.T @ d_out
    g_b2 = d_out.sum()
    delta = d_out[:, None] * w2 * (1.0 - A * A)
    g_W1 = delta.T @ X
    g_b1 = delta.sum(axis=0)
    g = np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])
    return g + 2.0 * alpha * theta


def objective(theta, X, y, hidden, alpha, beta) -> float:
    e = forward(theta, X, hidden) - y
    return float(beta * (e @ e) + alpha * (theta @ theta))


def _split(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(round(val_fraction * n))
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def snn_train(
    data: Dataset,
    hidden_size: int,
    seed: int,
    config: SnnConfig = SnnConfig(),
    init: np.ndarray | None = None,
) -> SnnModel:
    """Train on the labeled records of ``data``; see module docstring.

    ``init`` overrides the seeded initial parameters (warm start). The
    train/validation split is always drawn from ``seed``.
    """
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.ref_no2, dtype=float)
    keep = np.isfinite(y)
    X, y = X[keep], y[keep]
    if len(y) < config.min_records:
        raise DataError(f"snn_train needs >= {config.min_records} labeled records, got {len(y)}")
    st = Standardizer.fit(np.column_stack([X, y]), (*FEATURE_NAMES, "ref_no2"))
    Zall = st.transform(np.column_stack([X, y]))
    Z, t = Zall[:, :N_IN], Zall[:, N_IN]
    return _train(Z, t, st, hidden_size, seed, config, init)


def _train(Z, t, st, hidden, seed, config: SnnConfig, init) -> SnnModel:
    rng = np.random.default_rng(seed)
    theta = init_params(hidden, rng) if init is None else np.array(init, dtype=float)
    if config.val_fraction > 0:
        tr, va = _split(len(t), config.val_fraction, rng)
    else:
        tr, va = np.arange(len(t)), np.array([], dtype=int)
    Xtr, ytr, Xva, yva = Z[tr], t[tr], Z[va], t[va]
    XtrT = np.ascontiguousarray(Xtr.T)
    n, P = len(ytr), len(theta)
    I = np.eye(P)

    def val_mse(th) -> float:
        if len(yva) == 0:
            e = forward(th, Xtr, hidden) - ytr
        else:
            e = forward(th, Xva, hidden) - yva
        return float(e @ e / len(e))

    out, JT = jacobian_t(theta, XtrT, hidden)
    e = out - ytr
    sse, ssw = float(e @ e), float(theta @ theta)
    alpha = config.alpha0 if config.alpha0 is not None else (P / (2.0 * ssw) if ssw > 0 else 1.0)
    beta = config.beta0 if config.beta0 is not None else max(n - P, 1) / (2.0 * max(sse, 1e-12))
    mu = config.mu0

    history = [val_mse(theta)]
    best_theta, best_epoch, best_alpha, best_beta = theta, 0, alpha, beta
    fails = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        F = beta * sse + alpha * ssw
        if not np.isfinite(F):
            raise DivergenceError(epoch)
        JtJ = JT @ JT.T
        g = beta * (JT @ e) + alpha * theta
        if np.sqrt(g @ g) < config.min_grad:
            epoch -= 1
            break
        H = beta * JtJ
        accepted = False
        while mu <= config.mu_max:
            step = np.linalg.solve(H + (alpha + mu) * I, g)
            cand = theta - step
            e_c = forward(cand, Xtr, hidden) - ytr
            sse_c, ssw_c = float(e_c @ e_c), float(cand @ cand)
            F_c = beta * sse_c + alpha * ssw_c
            if not np.isfinite(F_c):
                raise DivergenceError(epoch)
            if F_c < F:
                mu = max(mu * config.mu_dec, config.mu_min)
                accepted = True
                break
            mu *= config.mu_inc
        if not accepted:
            epoch -= 1
            break
        theta, sse, ssw = cand, sse_c, ssw_c
        if config.bayesian:
            gamma = P - alpha * np.trace(np.linalg.inv(H + alpha * I))
            a_new = gamma / (2.0 * ssw) if ssw > 0 else 1.0
            # a collapsed network (gamma -> 0) would zero alpha and leave H + alpha*I singular
            if np.isfinite(a_new) and a_new > 0:
                alpha = a_new
            beta = max(n - gamma, 1e-12) / (2.0 * max(sse, 1e-300))
        out, JT = jacobian_t(theta, XtrT, hidden)
        e = out - ytr

        v = val_mse(theta) if len(yva) else sse / n
        history.append(v)
        if v < history[best_epoch]:
            best_theta, best_epoch, best_alpha, best_beta = theta, epoch, alpha, beta
            fails = 0
        else:
            fails += 1
            if fails >= config.patience:
                break

    return SnnModel(
        hidden_size=hidden,
        theta=best_theta,
        alpha=float(best_alpha),
        beta=float(best_beta),
        standardizer=st,
        seed=seed,
        epochs=epoch,
        best_epoch=best_epoch,
        val_history=tuple(history),
    )


def with_theta(model: SnnModel, theta: np.ndarray) -> SnnModel:
    return replace(model, theta=np.asarray(theta, dtype=float))
