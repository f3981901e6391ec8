"""
Label-delivery and adaptation planning over a post-calibration stream.

A plan is index-based: stream index ``i`` is the i-th usable sample after the
initial calibration window. Each period of ``tau`` samples delivers ``pi``
labeled tuples; the model incorporating them becomes active right after the
period's adaptation point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

TAUS: tuple[int, ...] = (2, 12, 24, 120, 240, 720, 2160)
PIS: tuple[int, ...] = (1, 4, 12, 24, 120, 168)


class Mode(str, enum.Enum):
    REGULAR = "REGULAR"
    OPPORTUNISTIC = "OPPORTUNISTIC"


def plausible(tau: int, pi: int, allow_equal: bool = False) -> bool:
    return 1 <= pi and (pi <= tau if allow_equal else pi < tau)


def enumerate_grid(
    allow_equal: bool = False,
    taus: Sequence[int] = TAUS,
    pis: Sequence[int] = PIS,
) -> list[tuple[int, int]]:
    """All plausible (tau, pi) pairs, ordered by tau then pi."""
    return [(t, p) for t in sorted(taus) for p in sorted(pis) if plausible(t, p, allow_equal)]


@dataclass(frozen=True)
class UpdateSchedule:
    tau: int
    pi: int
    mode: Mode = Mode.REGULAR
    seed: int = 0
    allow_equal: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.tau < 1 or not plausible(self.tau, self.pi, self.allow_equal):
            rel = "<=" if self.allow_equal else "<"
            raise ValueError(f"implausible schedule: need 1 <= pi {rel} tau, got tau={self.tau} pi={self.pi}")


@dataclass(frozen=True)
class PlanEntry:
    period: int
    labels: tuple[int, ...]
    adaptation_point: int


@dataclass(frozen=True)
class SchedulePlan:
    schedule: UpdateSchedule
    stream_length: int
    entries: tuple[PlanEntry, ...]

    @property
    def n_labels(self) -> int:
        return sum(len(e.labels) for e in self.entries)

    def to_csv(self, path: str | Path) -> None:
        lines = ["period,label_indices,adaptation_point"]
        for e in self.entries:
            lines.append(f"{e.period},{' '.join(map(str, e.labels))},{e.adaptation_point}")
        Path(path).write_text("\n".join(lines) + "\n")


def plan(s: UpdateSchedule, stream_length: int) -> SchedulePlan:
    """Lay out label indices and adaptation points.

    REGULAR: the first ``pi`` indices of each period, adaptation right after
    the last of them; a trailing partial period counts if its label window fits.
    OPPORTUNISTIC: ``pi`` indices drawn uniformly without replacement from each
    complete period, adaptation at the period's last index.
    """
    if stream_length < 1:
        raise ValueError(f"stream_length must be >= 1, got {stream_length}")
    tau, pi = s.tau, s.pi
    entries = []
    if s.mode is Mode.REGULAR:
        k = 0
        while k * tau + pi <= stream_length:
            start = k * tau
            entries.append(PlanEntry(k, tuple(range(start, start + pi)), start + pi - 1))
            k += 1
    else:
        rng = np.random.default_rng(np.random.SeedSequence([s.seed, tau, pi, stream_length]))
        for k in range(stream_length // tau):
            start = k * tau
            picks = np.sort(rng.choice(tau, size=pi, replace=False)) + start
            entries.append(PlanEntry(k, tuple(int(i) for i in picks), start + tau - 1))
    return SchedulePlan(s, stream_length, tuple(entries))


def plan_wallclock(s: UpdateSchedule, hour_offsets: Sequence[int]) -> SchedulePlan:
    """Plan on elapsed hours, then map onto the samples actually present.

    ``hour_offsets[i]`` is the number of hours between stream sample ``i`` and
    the stream start. Labels falling on missing hours are lost; each
    adaptation point moves to the last present sample at or before it.
    Periods that end up with no present label are dropped.
    """
    hours = np.asarray(hour_offsets, dtype=np.int64)
    if len(hours) == 0:
        raise ValueError("empty stream")
    hour_plan = plan(s, int(hours[-1]) + 1)
    index_of = {int(h): i for i, h in enumerate(hours)}
    entries = []
    for e in hour_plan.entries:
        labels = tuple(index_of[h] for h in e.labels if h in index_of)
        if not labels:
            continue
        point = int(np.searchsorted(hours, e.adaptation_point, side="right")) - 1
        entries.append(PlanEntry(e.period, labels, max(point, labels[-1])))
    return SchedulePlan(s, len(hours), tuple(entries))
