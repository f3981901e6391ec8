"""
Calibrate-then-adapt experiment protocol.

For each (offset, repeat) an initial model is trained on ``initial_window``
usable samples starting at ``offset``; the following samples form the test
stream. Adaptive strategies consume labeled tuples from the stream according
to a :class:`~aqadapt.schedule.SchedulePlan`, and every stream sample is
predicted by the model generation active at that point.

Seeds are derived from the master seed by hashing the run coordinates (see
:func:`derive_seed`), so adding or removing cells never changes others.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Literal, Sequence

import numpy as np

from .core import DataError, Dataset, ModelKind
from .metrics import METRIC_NAMES, MetricSet, compute_metrics
from .models import (
    ELM_HIDDEN_SIZES,
    SNN_HIDDEN_SIZES,
    SnnConfig,
    elm_fit,
    elm_update,
    fit_linear,
    predict_many,
    snn_train,
)
from .schedule import Mode, UpdateSchedule, enumerate_grid, plan, plan_wallclock

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    STATIC = "STATIC"
    INCREMENTAL_RETRAIN = "INCREMENTAL_RETRAIN"
    ADAPTIVE_UPDATE = "ADAPTIVE_UPDATE"


# CLI-facing model names -> (family, strategy)
MODELS: dict[str, tuple[ModelKind, Strategy]] = {
    "linear": (ModelKind.MULTILINEAR, Strategy.STATIC),
    "snn": (ModelKind.SNN, Strategy.STATIC),
    "elm": (ModelKind.ELM, Strategy.STATIC),
    "isnn": (ModelKind.SNN, Strategy.INCREMENTAL_RETRAIN),
    "aelm": (ModelKind.ELM, Strategy.ADAPTIVE_UPDATE),
}


class SizingError(DataError):
    pass


def derive_seed(master: int, *parts) -> int:
    """63-bit seed from sha256 over ``master`` and the ``|``-joined parts."""
    text = "|".join(str(p) for p in (master, *parts))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[str, ...] = ("linear", "snn", "elm", "isnn", "aelm")
    grid: tuple[tuple[int, int], ...] = tuple(enumerate_grid())
    modes: tuple[Mode, ...] = (Mode.REGULAR, Mode.OPPORTUNISTIC)
    initial_window: int = 672
    offsets: tuple[int, ...] = (0, 336, 672, 1008)
    test_span: int = 5075
    init_repeats: int = 10
    master_seed: int = 0
    snn_hidden: tuple[int, ...] = SNN_HIDDEN_SIZES
    elm_hidden: tuple[int, ...] = ELM_HIDDEN_SIZES
    snn: SnnConfig = SnnConfig()
    elm_mu: float = 1e-3
    elm_forgetting: float = 1.0
    elm_val_fraction: float = 0.25
    warm_start: bool = False
    shared_window: bool = False
    clock: Literal["samples", "wallclock"] = "samples"
    allow_pi_eq_tau: bool = False
    mre_floor: float = 1.0
    mane_norm: Literal["range", "mean"] = "range"
    nrmse_norm: Literal["std", "range", "mean"] = "std"

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(Mode(m) for m in self.modes))
        object.__setattr__(self, "grid", tuple((int(t), int(p)) for t, p in self.grid))
        unknown = [m for m in self.models if m not in MODELS]
        if unknown:
            raise ValueError(f"unknown model(s) {unknown}; choose from {sorted(MODELS)}")
        if self.init_repeats < 1:
            raise ValueError("init_repeats must be >= 1")
        if self.initial_window < 1 or self.test_span < 1 or any(o < 0 for o in self.offsets):
            raise ValueError("initial_window and test_span must be >= 1, offsets >= 0")
        if not self.offsets:
            raise ValueError("need at least one offset")
        for tau, pi in self.grid:
            UpdateSchedule(tau, pi, allow_equal=self.allow_pi_eq_tau)
        if self.clock not in ("samples", "wallclock"):
            raise ValueError(f"unknown clock {self.clock!r}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = [m.value for m in self.modes]
        d["grid"] = [list(c) for c in self.grid]
        for k in ("models", "offsets", "snn_hidden", "elm_hidden"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["snn"] = SnnConfig(**d["snn"]) if isinstance(d.get("snn"), dict) else d.get("snn", SnnConfig())
        for k in ("models", "offsets", "snn_hidden", "elm_hidden", "modes"):
            if k in d:
                d[k] = tuple(d[k])
        if "grid" in d:
            d["grid"] = tuple(tuple(c) for c in d["grid"])
        return cls(**d)


@dataclass(frozen=True)
class CellKey:
    model: str
    tau: int | None = None
    pi: int | None = None
    mode: Mode | None = None

    @property
    def strategy(self) -> Strategy:
        return MODELS[self.model][1]

    def label(self) -> str:
        if self.tau is None:
            return self.model
        return f"{self.model}_t{self.tau}_p{self.pi}_{self.mode.value.lower()}"

    def sort_key(self) -> tuple:
        return (self.model, self.tau or 0, self.pi or 0, self.mode.value if self.mode else "")


@dataclass
class Adaptation:
    generation: int
    active_from: int
    max_label_index: int
    n_new_labels: int
    train_size: int
    wall_time: float


@dataclass(eq=False)
class RunTrace:
    cell: CellKey
    offset: int
    repeat: int
    timestamps: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    generation: np.ndarray
    scored: np.ndarray
    labels_consumed: int
    initial_train_size: int
    hidden_size: int | None
    adaptations: list[Adaptation] = field(default_factory=list)

    @property
    def n_generations(self) -> int:
        return int(self.generation.max()) + 1 if len(self.generation) else 1

    def metrics(self, config: ExperimentConfig) -> MetricSet:
        return compute_metrics(
            self.y_true[self.scored],
            self.y_pred[self.scored],
            mre_floor=config.mre_floor,
            mane_norm=config.mane_norm,
            nrmse_norm=config.nrmse_norm,
        )

    def causality_violations(self) -> list[int]:
        """Generations that use a label at or after a sample they predict."""
        bad = []
        for a in self.adaptations:
            if a.max_label_index >= a.active_from:
                bad.append(a.generation)
        return bad


# -- initial calibration ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class InitialModel:
    kind: ModelKind
    model: object
    hidden_size: int | None
    scan: dict


def _windows(n_usable: int, config: ExperimentConfig, offset: int) -> tuple[slice, slice, int]:
    """Calibration slice, stream slice and number of leading unscored stream samples."""
    iw = config.initial_window
    if config.shared_window:
        end = max(config.offsets) + iw + config.test_span
        lead = max(config.offsets) - offset
    else:
        end = offset + iw + config.test_span
        lead = 0
    if n_usable < end:
        raise SizingError(
            f"need {end} usable samples (offset {offset} + initial {iw} + test {config.test_span}"
            f"{' on the shared window' if config.shared_window else ''}), dataset has {n_usable}"
        )
    return slice(offset, offset + iw), slice(offset + iw, end), lead


def initial_model(
    usable: Dataset,
    config: ExperimentConfig,
    kind: ModelKind,
    offset: int,
    repeat: int,
) -> InitialModel:
    """Train the initial model with a hidden-size scan on the calibration window."""
    calib = usable.take(_windows(len(usable), config, offset)[0])
    seed = derive_seed(config.master_seed, "init", kind.value, offset, repeat)
    if kind is ModelKind.MULTILINEAR:
        return InitialModel(kind, fit_linear(calib), None, {})
    if kind is ModelKind.SNN:
        best, scan = None, {}
        for h in config.snn_hidden:
            m = snn_train(calib, h, derive_seed(seed, h), config.snn)
            scan[h] = m.best_val_mse
            if best is None or m.best_val_mse < best.best_val_mse:
                best = m
        return InitialModel(kind, best, best.hidden_size, scan)
    rng = np.random.default_rng(seed)
    n = len(calib)
    n_val = int(round(config.elm_val_fraction * n))
    perm = rng.permutation(n)
    tr, va = calib.take(np.sort(perm[n_val:])), calib.take(np.sort(perm[:n_val]))
    scan = {}
    for h in config.elm_hidden:
        m = elm_fit(tr, h, derive_seed(seed, h), config.elm_mu, config.elm_forgetting)
        e = predict_many(m, va.features) - va.ref_no2 if n_val else np.zeros(1)
        scan[h] = float(np.mean(e * e))
    h = min(config.elm_hidden, key=lambda k: (scan[k], k))
    model = elm_fit(calib, h, derive_seed(seed, h), config.elm_mu, config.elm_forgetting)
    return InitialModel(kind, model, h, scan)


# -- one cell ----------------------------------------------------------------


def run_cell(
    dataset: Dataset,
    config: ExperimentConfig,
    cell: CellKey,
    offset: int,
    repeat: int,
    initial: InitialModel | None = None,
) -> RunTrace:
    """Run one (cell, offset, repeat) and return its prediction trace.

    ``dataset`` may contain outliers and unlabeled samples; only usable
    samples are considered.
    """
    usable = dataset.usable_view()
    kind, strategy = MODELS[cell.model]
    calib_sl, stream_sl, lead = _windows(len(usable), config, offset)
    calib, stream = usable.take(calib_sl), usable.take(stream_sl)
    if initial is None:
        initial = initial_model(usable, config, kind, offset, repeat)
    L = len(stream)
    X, y = stream.features, stream.ref_no2
    pred = np.empty(L)
    gen = np.zeros(L, dtype=np.int64)
    scored = np.zeros(L, dtype=bool)
    scored[lead:] = True
    trace = RunTrace(
        cell=cell,
        offset=offset,
        repeat=repeat,
        timestamps=stream.timestamps,
        y_true=y,
        y_pred=pred,
        generation=gen,
        scored=scored,
        labels_consumed=0,
        initial_train_size=len(calib),
        hidden_size=initial.hidden_size,
    )
    model = initial.model
    if strategy is Strategy.STATIC:
        pred[:] = predict_many(model, X)
        return trace

    schedule = UpdateSchedule(
        cell.tau,
        cell.pi,
        cell.mode,
        seed=derive_seed(config.master_seed, "plan", offset, repeat) % 2**32,
        allow_equal=config.allow_pi_eq_tau,
    )
    if config.clock == "wallclock":
        hours = (stream.timestamps - stream.timestamps[0]).astype("timedelta64[h]").astype(np.int64)
        p = plan_wallclock(schedule, hours)
    else:
        p = plan(schedule, L)

    label_idx: list[int] = []
    start, g = 0, 0
    for entry in p.entries:
        label_idx.extend(entry.labels)
        trace.labels_consumed += len(entry.labels)
        active_from = entry.adaptation_point + 1
        if active_from >= L:
            continue
        pred[start:active_from] = predict_many(model, X[start:active_from])
        gen[start:active_from] = g
        t0 = time.perf_counter()
        if strategy is Strategy.INCREMENTAL_RETRAIN:
            train = _concat(calib, stream.take(np.asarray(label_idx)))
            seed = derive_seed(
                config.master_seed, cell.model, cell.tau, cell.pi, cell.mode.value, offset, repeat, g + 1
            )
            init = model.theta if config.warm_start else None
            model = snn_train(train, initial.hidden_size, seed, config.snn, init=init)
            train_size = len(train)
        else:
            model = elm_update(model, stream.take(np.asarray(entry.labels)))
            train_size = len(calib) + len(label_idx)
        wall = time.perf_counter() - t0
        g += 1
        trace.adaptations.append(
            Adaptation(g, active_from, max(entry.labels), len(entry.labels), train_size, wall)
        )
        start = active_from
    pred[start:] = predict_many(model, X[start:])
    gen[start:] = g
    return trace


def _concat(a: Dataset, b: Dataset) -> Dataset:
    return Dataset(
        timestamps=np.concatenate([a.timestamps, b.timestamps]),
        features=np.concatenate([a.features, b.features]),
        ref_no2=np.concatenate([a.ref_no2, b.ref_no2]),
        ref_co=np.concatenate([a.ref_co, b.ref_co]),
        coverage=np.concatenate([a.coverage, b.coverage]),
        flags=np.concatenate([a.flags, b.flags]),
        meta=a.meta,
    )


# -- grid --------------------------------------------------------------------


@dataclass
class CellResult:
    key: CellKey
    mean: dict[str, float]
    std: dict[str, float]
    n_runs: int
    labels_consumed: int
    hidden_sizes: list[int | None]


@dataclass
class ExperimentReport:
    cells: dict[CellKey, CellResult]
    config: ExperimentConfig
    traces: list[RunTrace] = field(default_factory=list, repr=False)

    def cell(self, model: str, tau: int | None = None, pi: int | None = None, mode=None) -> CellResult:
        return self.cells[CellKey(model, tau, pi, Mode(mode) if mode is not None else None)]

    def mae(self, model: str, tau=None, pi=None, mode=None) -> float:
        return self.cell(model, tau, pi, mode).mean["mae"]

    @property
    def notes(self) -> dict:
        return {
            "mane_normalizer": self.config.mane_norm,
            "nrmse_normalizer": self.config.nrmse_norm,
            "mre_floor_ppb": self.config.mre_floor,
            "evaluation_window": "shared" if self.config.shared_window else "per-offset",
            "clock": self.config.clock,
        }

    def to_rows(self) -> list[dict]:
        rows = []
        for key in sorted(self.cells, key=CellKey.sort_key):
            c = self.cells[key]
            for m in METRIC_NAMES:
                rows.append(
                    {
                        "model": key.model,
                        "strategy": key.strategy.value,
                        "tau": "" if key.tau is None else key.tau,
                        "pi": "" if key.pi is None else key.pi,
                        "mode": key.mode.value if key.mode else "",
                        "metric": m,
                        "mean": repr(c.mean[m]),
                        "std": repr(c.std[m]),
                        "n_runs": c.n_runs,
                    }
                )
        return rows

    def to_csv(self, path: str | Path) -> None:
        cols = ["model", "strategy", "tau", "pi", "mode", "metric", "mean", "std", "n_runs"]
        lines = ["# " + json.dumps(self.notes, sort_keys=True), ",".join(cols)]
        lines += [",".join(str(r[c]) for c in cols) for r in self.to_rows()]
        Path(path).write_text("\n".join(lines) + "\n")

    def to_json(self) -> dict:
        out: dict = {"notes": self.notes, "config": self.config.as_dict(), "models": {}}
        for key in sorted(self.cells, key=CellKey.sort_key):
            c = self.cells[key]
            entry = {
                "mean": c.mean,
                "std": c.std,
                "n_runs": c.n_runs,
                "labels_consumed": c.labels_consumed,
                "hidden_sizes": c.hidden_sizes,
            }
            node = out["models"].setdefault(key.model, {"strategy": key.strategy.value, "cells": {}})
            if key.tau is None:
                node["cells"]["static"] = entry
            else:
                node["cells"].setdefault(key.mode.value, {})[f"{key.tau}:{key.pi}"] = entry
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentReport":
        """Rebuild the cell table written by :meth:`to_json` (traces are not stored)."""
        config = ExperimentConfig.from_dict(d["config"]) if "config" in d else ExperimentConfig()
        cells = {}
        for model, node in d["models"].items():
            for name, body in node["cells"].items():
                if name == "static":
                    entries = [(CellKey(model), body)]
                else:
                    entries = []
                    for tp, entry in body.items():
                        tau, pi = (int(v) for v in tp.split(":"))
                        entries.append((CellKey(model, tau, pi, Mode(name)), entry))
                for key, e in entries:
                    cells[key] = CellResult(
                        key, e["mean"], e["std"], e["n_runs"], e["labels_consumed"], e["hidden_sizes"]
                    )
        return cls(cells, config)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def cell_keys(config: ExperimentConfig) -> list[CellKey]:
    keys = []
    for model in config.models:
        if MODELS[model][1] is Strategy.STATIC:
            keys.append(CellKey(model))
        else:
            keys += [CellKey(model, t, p, m) for m in config.modes for t, p in config.grid]
    return keys


def _init_job(args):
    usable, config, kind, offset, repeat = args
    return (kind, offset, repeat), initial_model(usable, config, kind, offset, repeat)


def _cell_job(args):
    dataset, config, key, offset, repeat, init = args
    return run_cell(dataset, config, key, offset, repeat, init)


def _map(fn, jobs: list, workers: int) -> Iterator:
    """Results in job order, serially or from a process pool."""
    if workers <= 1:
        yield from map(fn, jobs)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, jobs, chunksize=1)


def run_grid(
    dataset: Dataset,
    config: ExperimentConfig,
    workers: int = 1,
    keep_traces: bool = False,
    on_trace: Callable[[RunTrace], None] | None = None,
) -> ExperimentReport:
    """Run every cell over offsets x repeats and average the metrics.

    Results are merged by cell key, so they do not depend on ``workers``.
    ``on_trace`` sees each finished run in a fixed order, which lets callers
    stream traces to disk instead of keeping them.
    """
    usable = dataset.usable_view()
    keys = cell_keys(config)
    kinds = sorted({MODELS[k.model][0] for k in keys}, key=lambda k: k.value)
    runs = [(o, r) for o in config.offsets for r in range(config.init_repeats)]
    for o in config.offsets:
        _windows(len(usable), config, o)

    init_jobs = [(usable, config, kind, o, r) for kind in kinds for o, r in runs]
    inits = dict(_map(_init_job, init_jobs, workers))

    cell_jobs = [
        (usable, config, key, o, r, inits[(MODELS[key.model][0], o, r)]) for key in keys for o, r in runs
    ]
    by_key: dict[CellKey, list[RunTrace]] = {k: [] for k in keys}
    traces: list[RunTrace] = []
    for trace in _map(_cell_job, cell_jobs, workers):
        by_key[trace.cell].append(trace)
        if on_trace is not None:
            on_trace(trace)
        if keep_traces:
            traces.append(trace)

    cells = {}
    for key, ts in by_key.items():
        ts.sort(key=lambda t: (t.offset, t.repeat))
        ms = [t.metrics(config) for t in ts]
        mean = {m: float(np.mean([getattr(x, m) for x in ms])) for m in METRIC_NAMES}
        std = {m: float(np.std([getattr(x, m) for x in ms])) for m in METRIC_NAMES}
        cells[key] = CellResult(
            key,
            mean,
            std,
            len(ts),
            int(np.mean([t.labels_consumed for t in ts])),
            [t.hidden_size for t in ts],
        )
    return ExperimentReport(cells, config, traces)


def table(report: ExperimentReport, model: str, mode: Mode | str, metric: str = "mae") -> list[list[str]]:
    """P x T grid (rows pi ascending, columns tau ascending); '-' marks absent cells."""
    mode = Mode(mode)
    if model not in MODELS:
        raise KeyError(f"unknown model {model!r}")
    keys = [k for k in report.cells if k.model == model and k.mode is mode]
    if not keys:
        raise KeyError(f"report has no cells for model={model} mode={mode.value}")
    taus = sorted({k.tau for k in keys})
    pis = sorted({k.pi for k in keys})
    rows = [["P\\T", *map(str, taus)]]
    for p in pis:
        row = [str(p)]
        for t in taus:
            c = report.cells.get(CellKey(model, t, p, mode))
            row.append("-" if c is None else f"{c.mean[metric]:.2f}")
        rows.append(row)
    return rows
