"""Raw stream and reference-analyzer ingestion into hourly datasets."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    FEATURE_NAMES,
    N_FEATURES,
    DataError,
    Dataset,
    Flag,
    mark_gap_adjacent,
    parse_timestamp,
)

log = logging.getLogger(__name__)

SAMPLES_PER_HOUR = 600  # 10 samples/minute nominal
RAW_HEADER = ("timestamp", *FEATURE_NAMES)
REF_HEADER = ("timestamp", "no2_ppb", "co_ppm")


class OrderingError(DataError):
    def __init__(self, index: int):
        super().__init__(f"raw samples not sorted by timestamp at index {index}")
        self.index = index


@dataclass(frozen=True)
class RawSample:
    timestamp: np.datetime64
    values: tuple[float, ...]


class JoinResult(NamedTuple):
    dataset: Dataset
    ignored: int


def _as_arrays(raw) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(raw, tuple) and len(raw) == 2 and isinstance(raw[0], np.ndarray):
        ts, values = raw
        ts = np.asarray(ts).astype("datetime64[s]").astype(np.int64)
        return ts, np.asarray(values, dtype=float).reshape(len(ts), N_FEATURES)
    raw = list(raw)
    ts = np.array([np.datetime64(r.timestamp, "s").astype(np.int64) for r in raw], dtype=np.int64)
    values = np.array([r.values for r in raw], dtype=float).reshape(len(raw), N_FEATURES)
    return ts, values


def aggregate_hourly(raw, min_coverage: float = 0.75, meta: dict | None = None) -> Dataset:
    """Average raw samples per UTC hour.

    ``raw`` is either a sequence of :class:`RawSample` or a
    ``(timestamps, values)`` pair of arrays. Hours with no samples produce no
    record; hours with coverage below ``min_coverage`` are flagged, not dropped.
    """
    ts, values = _as_arrays(raw)
    if len(ts) == 0:
        return Dataset.empty(meta)
    bad = np.flatnonzero(np.diff(ts) < 0)
    if bad.size:
        raise OrderingError(int(bad[0]) + 1)
    if not np.all(np.isfinite(values)):
        i = int(np.flatnonzero(~np.all(np.isfinite(values), axis=1))[0])
        raise DataError(f"non-finite raw value at index {i}")

    hours = ts // 3600
    starts = np.flatnonzero(np.r_[True, hours[1:] != hours[:-1]])
    counts = np.diff(np.r_[starts, len(ts)])
    # Sum in a value-sorted order inside each hour so the mean does not depend
    # on sample order.
    means = np.empty((len(starts), N_FEATURES))
    for j in range(N_FEATURES):
        order = np.lexsort((values[:, j], hours))
        means[:, j] = np.add.reduceat(values[order, j], starts) / counts

    coverage = np.minimum(counts / SAMPLES_PER_HOUR, 1.0)
    flags = np.where(coverage < min_coverage, int(Flag.LOW_COVERAGE), 0).astype(np.int64)
    nan = np.full(len(starts), np.nan)
    d = Dataset(
        timestamps=(hours[starts] * 3600).astype("datetime64[s]"),
        features=means,
        ref_no2=nan,
        ref_co=nan.copy(),
        coverage=coverage,
        flags=flags,
        meta=meta or {},
    )
    return mark_gap_adjacent(d)


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two datasets covering disjoint hours, re-deriving gap flags."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    ts = np.concatenate([a.timestamps, b.timestamps])
    order = np.argsort(ts, kind="stable")
    if np.any(np.diff(ts[order].astype(np.int64)) == 0):
        raise DataError("datasets overlap in time")
    flags = np.concatenate([a.flags, b.flags]) & ~int(Flag.GAP_ADJACENT)
    merged = Dataset(
        timestamps=ts[order],
        features=np.concatenate([a.features, b.features])[order],
        ref_no2=np.concatenate([a.ref_no2, b.ref_no2])[order],
        ref_co=np.concatenate([a.ref_co, b.ref_co])[order],
        coverage=np.concatenate([a.coverage, b.coverage])[order],
        flags=flags[order],
        meta=a.meta,
    )
    return mark_gap_adjacent(merged)


def join_reference(d: Dataset, ref: Sequence[tuple]) -> JoinResult:
    """Attach reference labels by exact hour match.

    ``ref`` holds ``(timestamp, no2_ppb, co_ppm)`` tuples; either value may be
    None/NaN. Reference hours without a matching record are counted as ignored.
    """
    ref_hours: dict[int, tuple[float, float]] = {}
    for ts, no2, co in ref:
        sec = int(np.datetime64(ts, "s").astype(np.int64))
        if sec % 3600:
            raise DataError(f"reference timestamp {ts} is not hour-aligned")
        if sec in ref_hours:
            raise DataError(f"duplicate reference hour {np.datetime64(sec, 's')}")
        ref_hours[sec] = (
            float("nan") if no2 is None else float(no2),
            float("nan") if co is None else float(co),
        )
    if not ref_hours:
        return JoinResult(d, 0)

    no2 = d.ref_no2.copy()
    co = d.ref_co.copy()
    matched = 0
    for i, sec in enumerate(d.timestamps.astype(np.int64)):
        hit = ref_hours.get(int(sec))
        if hit is not None:
            no2[i], co[i] = hit
            matched += 1
    ignored = len(ref_hours) - matched
    if ignored:
        log.info("join_reference: %d reference hours had no matching record", ignored)
    return JoinResult(d.replace(ref_no2=no2, ref_co=co), ignored)


def _read_rows(path: Path, header: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    rows = []
    seen_header = False
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not seen_header:
            if tuple(cells) != header:
                raise DataError(f"{path}:{lineno}: expected header {','.join(header)}")
            seen_header = True
            continue
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        rows.append((lineno, cells))
    return rows


def _float(text: str, where: str) -> float:
    if not text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{where}: bad number {text!r}") from None


def read_raw_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    rows = _read_rows(path, RAW_HEADER)
    ts = np.empty(len(rows), dtype="datetime64[s]")
    values = np.empty((len(rows), N_FEATURES))
    for i, (lineno, cells) in enumerate(rows):
        where = f"{path}:{lineno}"
        try:
            ts[i] = parse_timestamp(cells[0])
        except ValueError:
            raise DataError(f"{where}: bad timestamp {cells[0]!r}") from None
        values[i] = [_float(c, where) for c in cells[1:]]
    return ts, values


def read_reference_csv(path: str | Path) -> list[tuple[np.datetime64, float, float]]:
    path = Path(path)
    out = []
    for lineno, cells in _read_rows(path, REF_HEADER):
        where = f"{path}:{lineno}"
        try:
            ts = parse_timestamp(cells[0])
        except ValueError:
            raise DataError(f"{where}: bad timestamp {cells[0]!r}") from None
        out.append((ts, _float(cells[1], where), _float(cells[2], where)))
    return out
