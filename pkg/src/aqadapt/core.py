"""
Shared domain types for hourly multisensor data.

A :class:`Dataset` is stored column-wise (numpy arrays) because every
consumer downstream works on matrices; :class:`HourlyRecord` is the
row view used at the edges (CSV I/O, tests, ad-hoc inspection).

Missing hours are represented by absence. Missing reference labels are NaN.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

FEATURE_NAMES: tuple[str, ...] = (
    "we_no2",
    "ae_no2",
    "we_co",
    "ae_co",
    "we_o3",
    "ae_o3",
    "temp",
    "rh",
)
N_FEATURES = len(FEATURE_NAMES)
TEMP_COL = FEATURE_NAMES.index("temp")
RH_COL = FEATURE_NAMES.index("rh")

CSV_HEADER: tuple[str, ...] = (
    "timestamp",
    *FEATURE_NAMES,
    "ref_no2",
    "ref_co",
    "coverage",
    "flags",
)

HOUR = np.timedelta64(3600, "s")


class Flag(enum.IntFlag):
    NONE = 0
    OUTLIER = 1
    LOW_COVERAGE = 2
    GAP_ADJACENT = 4


class ModelKind(str, enum.Enum):
    MULTILINEAR = "MULTILINEAR"
    SNN = "SNN"
    ELM = "ELM"


class DataError(ValueError):
    """Input data does not satisfy an operation's preconditions."""


def parse_flags(text: str) -> Flag:
    out = Flag.NONE
    for token in filter(None, (t.strip() for t in text.split("|"))):
        try:
            out |= Flag[token]
        except KeyError:
            raise DataError(f"unknown flag token {token!r}") from None
    return out


def format_flags(flags: int) -> str:
    return "|".join(f.name for f in (Flag.OUTLIER, Flag.LOW_COVERAGE, Flag.GAP_ADJACENT) if flags & f)


def parse_timestamp(text: str) -> np.datetime64:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1]
    elif text.endswith("+00:00"):
        text = text[:-6]
    return np.datetime64(text, "s")


def format_timestamp(ts: np.datetime64) -> str:
    return f"{np.datetime_as_string(np.datetime64(ts, 's'), unit='s')}Z"


@dataclass(frozen=True)
class PlausibilityGate:
    temp: tuple[float, float] = (-40.0, 60.0)
    rh: tuple[float, float] = (0.0, 100.0)


@dataclass(frozen=True)
class FeatureVector:
    we_no2: float
    ae_no2: float
    we_co: float
    ae_co: float
    we_o3: float
    ae_o3: float
    temp: float
    rh: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != N_FEATURES:
            raise DataError(f"expected {N_FEATURES} feature values, got {len(values)}")
        return cls(*values)

    def is_plausible(self, gate: PlausibilityGate = PlausibilityGate()) -> bool:
        arr = self.as_array()
        return (
            bool(np.all(np.isfinite(arr)))
            and gate.temp[0] <= self.temp <= gate.temp[1]
            and gate.rh[0] <= self.rh <= gate.rh[1]
        )


@dataclass(frozen=True)
class HourlyRecord:
    timestamp: np.datetime64
    features: FeatureVector
    ref_no2: float | None = None
    ref_co: float | None = None
    coverage: float = 1.0
    flags: Flag = Flag.NONE


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered hourly samples plus provenance metadata.

    Construction does not enforce the ordering/alignment invariants; use
    :func:`validate_dataset` for that, so malformed inputs can be reported
    rather than rejected wholesale.
    """

    timestamps: np.ndarray
    features: np.ndarray
    ref_no2: np.ndarray
    ref_co: np.ndarray
    coverage: np.ndarray
    flags: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.timestamps)
        ts = np.asarray(self.timestamps).astype("datetime64[s]")
        feats = np.asarray(self.features, dtype=float).reshape(n, N_FEATURES)
        cols = {
            "timestamps": ts,
            "features": feats,
            "ref_no2": np.asarray(self.ref_no2, dtype=float).reshape(n),
            "ref_co": np.asarray(self.ref_co, dtype=float).reshape(n),
            "coverage": np.asarray(self.coverage, dtype=float).reshape(n),
            "flags": np.asarray(self.flags, dtype=np.int64).reshape(n),
        }
        for name, value in cols.items():
            object.__setattr__(self, name, _readonly(value))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def empty(cls, meta: dict | None = None) -> "Dataset":
        return cls(
            timestamps=np.array([], dtype="datetime64[s]"),
            features=np.zeros((0, N_FEATURES)),
            ref_no2=np.zeros(0),
            ref_co=np.zeros(0),
            coverage=np.zeros(0),
            flags=np.zeros(0, dtype=np.int64),
            meta=meta or {},
        )

    @classmethod
    def from_records(cls, records: Iterable[HourlyRecord], meta: dict | None = None) -> "Dataset":
        records = list(records)
        if not records:
            return cls.empty(meta)
        nan = float("nan")
        return cls(
            timestamps=np.array([np.datetime64(r.timestamp, "s") for r in records]),
            features=np.array([r.features.as_array() for r in records]),
            ref_no2=np.array([nan if r.ref_no2 is None else r.ref_no2 for r in records]),
            ref_co=np.array([nan if r.ref_co is None else r.ref_co for r in records]),
            coverage=np.array([r.coverage for r in records]),
            flags=np.array([int(r.flags) for r in records], dtype=np.int64),
            meta=meta or {},
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def record(self, i: int) -> HourlyRecord:
        no2, co = self.ref_no2[i], self.ref_co[i]
        return HourlyRecord(
            timestamp=self.timestamps[i],
            features=FeatureVector.from_array(self.features[i]),
            ref_no2=None if math.isnan(no2) else float(no2),
            ref_co=None if math.isnan(co) else float(co),
            coverage=float(self.coverage[i]),
            flags=Flag(int(self.flags[i])),
        )

    @property
    def records(self) -> Iterator[HourlyRecord]:
        return (self.record(i) for i in range(len(self)))

    def replace(self, **changes) -> "Dataset":
        cols = {
            "timestamps": self.timestamps,
            "features": self.features,
            "ref_no2": self.ref_no2,
            "ref_co": self.ref_co,
            "coverage": self.coverage,
            "flags": self.flags,
            "meta": self.meta,
        }
        cols.update(changes)
        return Dataset(**cols)

    def take(self, index) -> "Dataset":
        """Subset by integer index array or boolean mask."""
        return Dataset(
            timestamps=self.timestamps[index],
            features=self.features[index],
            ref_no2=self.ref_no2[index],
            ref_co=self.ref_co[index],
            coverage=self.coverage[index],
            flags=self.flags[index],
            meta=self.meta,
        )

    @property
    def labeled(self) -> np.ndarray:
        return ~np.isnan(self.ref_no2)

    @property
    def usable(self) -> np.ndarray:
        """Mask of samples eligible for training, updating and scoring."""
        return self.labeled & ((self.flags & Flag.OUTLIER) == 0)

    def usable_view(self) -> "Dataset":
        return self.take(np.flatnonzero(self.usable))

    def equals(self, other: "Dataset") -> bool:
        """Bitwise equality of all columns and metadata (NaN == NaN)."""
        if len(self) != len(other) or self.meta != other.meta:
            return False
        return all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=c not in ("timestamps", "flags"))
            for c in ("timestamps", "features", "ref_no2", "ref_co", "coverage", "flags")
        )


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    detail: str = ""


def validate_dataset(d: Dataset, gate: PlausibilityGate = PlausibilityGate()) -> list[Violation]:
    """Check every :class:`Dataset` invariant; an empty list means valid."""
    out: list[Violation] = []
    secs = d.timestamps.astype(np.int64)
    for i in range(len(d)):
        if secs[i] % 3600 != 0:
            out.append(Violation(i, "MISALIGNED", format_timestamp(d.timestamps[i])))
        if i > 0:
            if secs[i] == secs[i - 1]:
                out.append(Violation(i, "DUPLICATE_TIMESTAMP", format_timestamp(d.timestamps[i])))
            elif secs[i] < secs[i - 1]:
                out.append(Violation(i, "ORDER", "timestamp precedes previous record"))
        row = d.features[i]
        bad = [FEATURE_NAMES[j] for j in np.flatnonzero(~np.isfinite(row))]
        if bad:
            out.append(Violation(i, "NONFINITE", ",".join(bad)))
        else:
            t, rh = row[TEMP_COL], row[RH_COL]
            if not gate.temp[0] <= t <= gate.temp[1]:
                out.append(Violation(i, "RANGE", f"temp={t}"))
            if not gate.rh[0] <= rh <= gate.rh[1]:
                out.append(Violation(i, "RANGE", f"rh={rh}"))
        for name in ("ref_no2", "ref_co"):
            v = getattr(d, name)[i]
            if not math.isnan(v) and (not math.isfinite(v) or v < 0):
                out.append(Violation(i, "LABEL", f"{name}={v}"))
        c = d.coverage[i]
        if not 0.0 <= c <= 1.0:
            out.append(Violation(i, "COVERAGE", f"coverage={c}"))
        if d.flags[i] & ~(Flag.OUTLIER | Flag.LOW_COVERAGE | Flag.GAP_ADJACENT):
            out.append(Violation(i, "FLAGS", f"unknown bits {int(d.flags[i])}"))
    return out


def mark_gap_adjacent(d: Dataset) -> Dataset:
    """Set GAP_ADJACENT on records whose previous or next hour is missing."""
    n = len(d)
    if n == 0:
        return d
    step = np.diff(d.timestamps.astype(np.int64))
    gap_after = np.zeros(n, dtype=bool)
    gap_before = np.zeros(n, dtype=bool)
    gap_after[:-1] = step > 3600
    gap_before[1:] = step > 3600
    flags = d.flags.copy()
    flags[gap_after | gap_before] |= int(Flag.GAP_ADJACENT)
    return d.replace(flags=flags)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write the canonical CSV form; floats use shortest round-trip repr."""
    lines = []
    if d.meta:
        lines.append("#meta " + json.dumps(d.meta, sort_keys=True))
    lines.append(",".join(CSV_HEADER))
    for i in range(len(d)):
        cells = [format_timestamp(d.timestamps[i])]
        cells += [_fmt(v) for v in d.features[i]]
        cells += [_fmt(d.ref_no2[i]), _fmt(d.ref_co[i]), _fmt(d.coverage[i]), format_flags(int(d.flags[i]))]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> Dataset:
    meta: dict = {}
    rows = []
    header = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#meta "):
            meta = json.loads(line[6:])
            continue
        if line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            header = tuple(c.strip() for c in cells)
            if header != CSV_HEADER:
                raise DataError(f"{path}:{lineno}: unexpected header {header}")
            continue
        if len(cells) != len(CSV_HEADER):
            raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(cells)}")
        rows.append((lineno, cells))
    if header is None:
        raise DataError(f"{path}: missing header")

    def num(text: str, lineno: int) -> float:
        try:
            return float(text) if text.strip() else float("nan")
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad number {text!r}") from None

    n = len(rows)
    ts = np.empty(n, dtype="datetime64[s]")
    feats = np.empty((n, N_FEATURES))
    no2, co, cov = np.empty(n), np.empty(n), np.empty(n)
    flags = np.zeros(n, dtype=np.int64)
    for i, (lineno, cells) in enumerate(rows):
        try:
            ts[i] = parse_timestamp(cells[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad timestamp {cells[0]!r}") from None
        feats[i] = [num(c, lineno) for c in cells[1 : 1 + N_FEATURES]]
        no2[i] = num(cells[9], lineno)
        co[i] = num(cells[10], lineno)
        cov[i] = num(cells[11], lineno) if cells[11].strip() else 1.0
        flags[i] = int(parse_flags(cells[12]))
    return Dataset(ts, feats, no2, co, cov, flags, meta)
