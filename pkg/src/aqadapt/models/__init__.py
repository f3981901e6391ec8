"""Calibration model families, prediction dispatch and model serialization."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from ..core import FeatureVector, ModelKind, PlausibilityGate
from ..preprocess import Standardizer
from .elm import (
    ELM_HIDDEN_SIZES,
    ConditioningError,
    CovarianceError,
    ElmModel,
    elm_fit,
    elm_update,
)
from .linear import LinearModel, SingularError, fit_linear, ols_fit
from .snn import (
    SNN_HIDDEN_SIZES,
    DivergenceError,
    SnnConfig,
    SnnModel,
    snn_gradient,
    snn_train,
)

Model = Union[LinearModel, SnnModel, ElmModel]
FORMAT_VERSION = 1

__all__ = [
    "ELM_HIDDEN_SIZES",
    "SNN_HIDDEN_SIZES",
    "ConditioningError",
    "CovarianceError",
    "DivergenceError",
    "ElmModel",
    "LinearModel",
    "Model",
    "ModelStateError",
    "SingularError",
    "SnnConfig",
    "SnnModel",
    "elm_fit",
    "elm_update",
    "fit_linear",
    "kind_of",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "ols_fit",
    "predict",
    "predict_many",
    "save_model",
    "snn_gradient",
    "snn_train",
]


class ModelStateError(RuntimeError):
    pass


def kind_of(model) -> ModelKind:
    if isinstance(model, LinearModel):
        return ModelKind.MULTILINEAR
    if isinstance(model, SnnModel):
        return ModelKind.SNN
    if isinstance(model, ElmModel):
        return ModelKind.ELM
    raise ModelStateError(f"not a trained calibration model: {model!r}")


def predict_many(model: Model, X: np.ndarray) -> np.ndarray:
    """NO2 estimates (ppb) for a feature matrix; no clipping is applied."""
    kind_of(model)
    return model.predict_array(np.asarray(X, dtype=float))


def predict(model: Model, features: FeatureVector, gate: PlausibilityGate = PlausibilityGate()) -> float:
    if not features.is_plausible(gate):
        raise ValueError(f"features fail plausibility gate: {features}")
    return float(predict_many(model, features.as_array()[None, :])[0])


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: Model) -> dict:
    kind = kind_of(model)
    out: dict = {"format": "aqadapt-model", "version": FORMAT_VERSION, "kind": kind.value}
    if kind is ModelKind.MULTILINEAR:
        out["weights"] = _arr(model.weights)
        out["standardizer"] = model.standardizer.to_dict() if model.standardizer else None
    elif kind is ModelKind.SNN:
        out.update(
            hidden_size=model.hidden_size,
            seed=model.seed,
            theta=_arr(model.theta),
            alpha=model.alpha,
            beta=model.beta,
            epochs=model.epochs,
            best_epoch=model.best_epoch,
            val_history=list(model.val_history),
            standardizer=model.standardizer.to_dict(),
        )
    else:
        out.update(
            hidden_size=model.hidden_size,
            seed=model.seed,
            mu=model.mu,
            forgetting=model.forgetting,
            width=model.width,
            centers=_arr(model.centers),
            weights=_arr(model.weights),
            covariance=_arr(model.covariance),
            n_seen=model.n_seen,
            standardizer=model.standardizer.to_dict(),
        )
    return out


def model_from_dict(d: dict) -> Model:
    if d.get("format") != "aqadapt-model":
        raise ValueError("not a serialized calibration model")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    kind = ModelKind(d["kind"])
    if kind is ModelKind.MULTILINEAR:
        st = Standardizer.from_dict(d["standardizer"]) if d["standardizer"] else None
        return LinearModel(np.array(d["weights"]), st)
    st = Standardizer.from_dict(d["standardizer"])
    if kind is ModelKind.SNN:
        return SnnModel(
            hidden_size=d["hidden_size"],
            theta=np.array(d["theta"]),
            alpha=d["alpha"],
            beta=d["beta"],
            standardizer=st,
            seed=d["seed"],
            epochs=d["epochs"],
            best_epoch=d["best_epoch"],
            val_history=tuple(d["val_history"]),
        )
    return ElmModel(
        hidden_size=d["hidden_size"],
        centers=np.array(d["centers"]),
        width=d["width"],
        weights=np.array(d["weights"]),
        covariance=np.array(d["covariance"]),
        mu=d["mu"],
        forgetting=d["forgetting"],
        standardizer=st,
        seed=d["seed"],
        n_seen=d["n_seen"],
    )


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
