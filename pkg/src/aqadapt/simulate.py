"""
Synthetic co-location data with controllable concept drift.

True concentrations (NO2, O3 in ppb; CO in ppm) and ambient conditions
follow diurnal and seasonal cycles plus AR(1) noise. Each electrochemical
channel g produces

    WE_g(t) = b_we_g(t) + s_g(t)*C_g(t) + kT_we*T + kRH*RH + sum_o cross_go*C_o(t) + noise
    AE_g(t) = b_ae_g(t) + kT_ae*T + noise

where s_g decays geometrically at a yearly rate and the electrode baselines
follow seeded random walks (a component shared by both electrodes plus an
electrode-specific one). Changes in the pollutant/ambient distribution and
in s_g, b_g are the two drift sources a static calibration cannot follow.

Random draw order: every named stream in ``STREAMS`` gets its own child of
``SeedSequence(seed)``; new streams are appended, never inserted, so existing
channels stay bit-identical when the model grows.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.signal import lfilter

from .core import Dataset, format_timestamp, mark_gap_adjacent, parse_timestamp

HOURS_PER_YEAR = 8760.0
GASES = ("no2", "co", "o3")
STREAMS = (
    "no2",
    "o3",
    "co",
    "temp",
    "rh",
    "sensor.no2",
    "sensor.co",
    "sensor.o3",
    "gaps",
)


class ScenarioError(ValueError):
    """Invalid scenario parameters or scenario file."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ChannelResponse:
    """Electrochemical cell response; concentration units are ppb (ppm for CO)."""

    sensitivity: float
    baseline_we: float
    baseline_ae: float
    temp_coeff_we: float
    temp_coeff_ae: float
    rh_coeff: float
    cross_no2: float = 0.0
    cross_co: float = 0.0
    cross_o3: float = 0.0
    temp_quad: float = 0.0
    sensitivity_drift: float = 0.0
    baseline_rw_std: float = 0.0
    rw_common_fraction: float = 0.5
    noise_std: float = 0.0


@dataclass(frozen=True)
class DriftScenario:
    duration_hours: int
    seed: int = 0
    start: str = "2018-04-01T00:00:00Z"
    # NO2 (ppb)
    no2_base: float = 16.0
    no2_morning_amp: float = 36.0
    no2_morning_hour: float = 8.0
    no2_evening_amp: float = 28.0
    no2_evening_hour: float = 19.0
    no2_peak_width: float = 2.0
    no2_seasonal_amp: float = 0.4
    no2_seasonal_peak_day: float = 15.0
    no2_ar_coeff: float = 0.9
    no2_ar_std: float = 7.0
    # O3 (ppb)
    o3_base: float = 22.0
    o3_seasonal_amp: float = 14.0
    o3_seasonal_peak_day: float = 190.0
    o3_diurnal_amp: float = 18.0
    o3_peak_hour: float = 14.0
    o3_titration: float = 0.3
    o3_ar_coeff: float = 0.9
    o3_ar_std: float = 4.0
    # CO (ppm)
    co_base: float = 0.2
    co_per_no2: float = 0.012
    co_seasonal_amp: float = 0.3
    co_ar_coeff: float = 0.9
    co_ar_std: float = 0.04
    # ambient
    temp_mean: float = 24.0
    temp_seasonal_swing: float = 8.0
    temp_warmest_day: float = 200.0
    temp_daily_amp: float = 3.0
    temp_peak_hour: float = 15.0
    temp_ar_coeff: float = 0.8
    temp_noise_std: float = 1.0
    rh_mean: float = 55.0
    rh_seasonal_swing: float = 10.0
    rh_daily_amp: float = 12.0
    rh_ar_coeff: float = 0.8
    rh_noise_std: float = 4.0
    # gaps
    gap_count: float = 20.0
    gap_mean_length: float = 33.0
    # quadratic temperature term on WE electrodes
    nonlinear_temp: bool = False
    no2: ChannelResponse = field(
        default_factory=lambda: ChannelResponse(
            sensitivity=-0.30,
            baseline_we=225.0,
            baseline_ae=230.0,
            temp_coeff_we=0.8,
            temp_coeff_ae=0.5,
            rh_coeff=0.05,
            cross_o3=-0.25,
            temp_quad=0.02,
            sensitivity_drift=0.2,
            baseline_rw_std=0.02,
            rw_common_fraction=0.8,
            noise_std=0.3,
        )
    )
    co: ChannelResponse = field(
        default_factory=lambda: ChannelResponse(
            sensitivity=300.0,
            baseline_we=330.0,
            baseline_ae=290.0,
            temp_coeff_we=1.5,
            temp_coeff_ae=0.8,
            rh_coeff=0.1,
            cross_no2=0.05,
            temp_quad=0.03,
            sensitivity_drift=0.05,
            baseline_rw_std=0.02,
            rw_common_fraction=0.8,
            noise_std=1.5,
        )
    )
    o3: ChannelResponse = field(
        default_factory=lambda: ChannelResponse(
            sensitivity=-0.35,
            baseline_we=230.0,
            baseline_ae=228.0,
            temp_coeff_we=0.7,
            temp_coeff_ae=0.6,
            rh_coeff=0.05,
            cross_no2=-0.05,
            temp_quad=0.02,
            sensitivity_drift=0.08,
            baseline_rw_std=0.02,
            rw_common_fraction=0.8,
            noise_std=0.3,
        )
    )

    def __post_init__(self) -> None:
        problems = []
        if self.duration_hours < 1:
            problems.append("duration_hours must be >= 1")
        for name in ("no2", "o3", "co", "temp", "rh"):
            if not 0.0 <= getattr(self, f"{name}_ar_coeff") < 1.0:
                problems.append(f"{name}_ar_coeff must lie in [0, 1)")
        for f in dataclasses.fields(self):
            if f.name.endswith("_std") and getattr(self, f.name) < 0:
                problems.append(f"{f.name} must be >= 0")
        for g in GASES:
            ch: ChannelResponse = getattr(self, g)
            if ch.baseline_rw_std < 0 or ch.noise_std < 0:
                problems.append(f"{g}: std values must be >= 0")
            if not 0.0 <= ch.sensitivity_drift < 1.0:
                problems.append(f"{g}.sensitivity_drift must lie in [0, 1)")
            if not 0.0 <= ch.rw_common_fraction <= 1.0:
                problems.append(f"{g}.rw_common_fraction must lie in [0, 1]")
        if self.gap_count < 0 or self.gap_mean_length < 1:
            problems.append("gap_count must be >= 0 and gap_mean_length >= 1")
        try:
            parse_timestamp(self.start)
        except ValueError:
            problems.append(f"bad start timestamp {self.start!r}")
        if problems:
            raise ScenarioError("; ".join(problems))


def default_scenario(duration_hours: int = 13140, seed: int = 0) -> DriftScenario:
    """Documented default parameters, starting April 1st like the field campaign.

    The expected gap count scales with duration (about 5% of hours missing).
    """
    if duration_hours < 24:
        raise ScenarioError("default scenario needs duration_hours >= 24")
    return DriftScenario(
        duration_hours=int(duration_hours),
        seed=seed,
        gap_count=20.0 * duration_hours / 13140.0,
    )


def no_drift(s: DriftScenario) -> DriftScenario:
    """Same scenario with sensitivity decay and baseline random walks disabled."""
    return dataclasses.replace(
        s,
        **{g: dataclasses.replace(getattr(s, g), sensitivity_drift=0.0, baseline_rw_std=0.0) for g in GASES},
    )


@dataclass(frozen=True, eq=False)
class SimulationResult:
    dataset: Dataset
    truth: dict[str, np.ndarray]

    def write_truth_csv(self, path: str | Path) -> None:
        cols = [c for c in self.truth if c != "timestamp"]
        lines = [",".join(["timestamp", *cols])]
        for i, ts in enumerate(self.truth["timestamp"]):
            lines.append(",".join([format_timestamp(ts), *(repr(float(self.truth[c][i])) for c in cols)]))
        Path(path).write_text("\n".join(lines) + "\n")


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS.index(stream),)))


def _ar1(innov: np.ndarray, phi: float, std: float) -> np.ndarray:
    """Stationary AR(1) with marginal std ``std`` driven by unit innovations."""
    if std == 0:
        return np.zeros_like(innov)
    scale = std * math.sqrt(1.0 - phi * phi)
    x0 = innov[0] * std
    out, _ = lfilter([1.0], [1.0, -phi], innov[1:] * scale, zi=[phi * x0])
    return np.concatenate([[x0], out])


def _yearly(t_hours: np.ndarray, start_doy: float, peak_day: float) -> np.ndarray:
    day = start_doy + t_hours / 24.0
    return np.cos(2 * np.pi * (day - peak_day) / 365.0)


def _bump(hour: np.ndarray, center: float, width: float) -> np.ndarray:
    d = (hour - center + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (d / width) ** 2)


def generate(s: DriftScenario) -> SimulationResult:
    n = s.duration_hours
    t = np.arange(n, dtype=float)
    start = parse_timestamp(s.start)
    start_sec = int(start.astype(np.int64))
    if start_sec % 3600:
        raise ScenarioError("start must be hour-aligned")
    start_doy = float((start - start.astype("datetime64[Y]")) / np.timedelta64(1, "D"))
    hour = (start_sec // 3600 + t) % 24.0

    # ambient
    temp = (
        s.temp_mean
        + s.temp_seasonal_swing * _yearly(t, start_doy, s.temp_warmest_day)
        + s.temp_daily_amp * np.cos(2 * np.pi * (hour - s.temp_peak_hour) / 24.0)
        + _ar1(_rng(s.seed, "temp").standard_normal(n), s.temp_ar_coeff, s.temp_noise_std)
    )
    rh = (
        s.rh_mean
        - s.rh_seasonal_swing * _yearly(t, start_doy, s.temp_warmest_day)
        - s.rh_daily_amp * np.cos(2 * np.pi * (hour - s.temp_peak_hour) / 24.0)
        + _ar1(_rng(s.seed, "rh").standard_normal(n), s.rh_ar_coeff, s.rh_noise_std)
    )
    rh = np.clip(rh, 5.0, 100.0)

    # pollutants
    diurnal = s.no2_base + s.no2_morning_amp * _bump(hour, s.no2_morning_hour, s.no2_peak_width)
    diurnal += s.no2_evening_amp * _bump(hour, s.no2_evening_hour, 1.25 * s.no2_peak_width)
    season = 1.0 + s.no2_seasonal_amp * _yearly(t, start_doy, s.no2_seasonal_peak_day)
    no2 = diurnal * season + _ar1(_rng(s.seed, "no2").standard_normal(n), s.no2_ar_coeff, s.no2_ar_std)
    no2 = np.maximum(no2, 0.0)

    summer = 0.5 * (1.0 + _yearly(t, start_doy, s.o3_seasonal_peak_day))
    o3 = (
        s.o3_base
        + s.o3_seasonal_amp * _yearly(t, start_doy, s.o3_seasonal_peak_day)
        + s.o3_diurnal_amp * (0.5 + summer) * _bump(hour, s.o3_peak_hour, 3.0)
        - s.o3_titration * (no2 - no2.mean())
        + _ar1(_rng(s.seed, "o3").standard_normal(n), s.o3_ar_coeff, s.o3_ar_std)
    )
    o3 = np.maximum(o3, 0.0)

    co_season = 1.0 + s.co_seasonal_amp * _yearly(t, start_doy, s.no2_seasonal_peak_day)
    co = (s.co_base + s.co_per_no2 * no2) * co_season
    co = co + _ar1(_rng(s.seed, "co").standard_normal(n), s.co_ar_coeff, s.co_ar_std)
    co = np.maximum(co, 0.02)

    conc = {"no2": no2, "co": co, "o3": o3}
    truth: dict[str, np.ndarray] = {"timestamp": start + t.astype(np.int64) * np.timedelta64(3600, "s")}
    truth.update({f"true_{g}": conc[g] for g in GASES})
    channels = {}
    for g in GASES:
        ch: ChannelResponse = getattr(s, g)
        rng = _rng(s.seed, f"sensor.{g}")
        steps = rng.standard_normal((3, n))  # common, WE-only, AE-only walks
        noise = rng.standard_normal((2, n))  # WE, AE measurement noise
        common = math.sqrt(ch.rw_common_fraction) * ch.baseline_rw_std
        own = math.sqrt(1.0 - ch.rw_common_fraction) * ch.baseline_rw_std
        walk_c = np.cumsum(steps[0]) * common
        b_we = ch.baseline_we + walk_c + np.cumsum(steps[1]) * own
        b_ae = ch.baseline_ae + walk_c + np.cumsum(steps[2]) * own
        sens = ch.sensitivity * (1.0 - ch.sensitivity_drift) ** (t / HOURS_PER_YEAR)
        we = b_we + sens * conc[g] + ch.temp_coeff_we * temp + ch.rh_coeff * rh
        for other in GASES:
            if other != g:
                we = we + getattr(ch, f"cross_{other}") * conc[other]
        ae = b_ae + ch.temp_coeff_ae * temp
        if s.nonlinear_temp:
            we = we + ch.temp_quad * (temp - 20.0) ** 2
        we = we + ch.noise_std * noise[0]
        ae = ae + ch.noise_std * noise[1]
        channels[g] = (we, ae)
        truth[f"sens_{g}"] = sens
        truth[f"baseline_we_{g}"] = b_we
        truth[f"baseline_ae_{g}"] = b_ae

    keep = np.ones(n, dtype=bool)
    grng = _rng(s.seed, "gaps")
    n_gaps = grng.poisson(s.gap_count)
    starts = grng.integers(0, n, size=n_gaps)
    lengths = grng.geometric(1.0 / s.gap_mean_length, size=n_gaps)
    for a, length in zip(starts, lengths):
        keep[a : a + length] = False
    truth["present"] = keep.astype(float)

    features = np.column_stack(
        [
            channels["no2"][0],
            channels["no2"][1],
            channels["co"][0],
            channels["co"][1],
            channels["o3"][0],
            channels["o3"][1],
            temp,
            rh,
        ]
    )
    idx = np.flatnonzero(keep)
    d = Dataset(
        timestamps=truth["timestamp"][idx],
        features=features[idx],
        ref_no2=no2[idx],
        ref_co=co[idx],
        coverage=np.ones(len(idx)),
        flags=np.zeros(len(idx), dtype=np.int64),
        meta={"source": "simulated", "scenario_seed": s.seed, "duration_hours": n},
    )
    return SimulationResult(mark_gap_adjacent(d), truth)


# -- scenario files -------------------------------------------------------


def scenario_to_dict(s: DriftScenario) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(s):
        v = getattr(s, f.name)
        if isinstance(v, ChannelResponse):
            for cf in dataclasses.fields(v):
                out[f"{f.name}.{cf.name}"] = getattr(v, cf.name)
        else:
            out[f.name] = v
    return out


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_scenario(s: DriftScenario, path: str | Path) -> None:
    lines = [f"{k} = {_format_value(v)}" for k, v in scenario_to_dict(s).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _coerce(kind: type, raw: str, line: int, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ScenarioError(f"bad value {raw!r} for {key}", line) from None


def parse_scenario(text: str, base: DriftScenario | None = None) -> DriftScenario:
    """Parse ``key = value`` lines; unspecified keys keep ``base`` values.

    Without ``base``, ``duration_hours`` is required and everything else
    falls back to :func:`default_scenario` for that duration.
    """
    top = {f.name: f for f in dataclasses.fields(DriftScenario)}
    chan = {f.name: f for f in dataclasses.fields(ChannelResponse)}
    types = {"int": int, "float": float, "bool": bool, "str": str}
    values: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {g: {} for g in GASES}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", lineno)
        key, raw = (p.strip() for p in line.split("=", 1))
        if "." in key:
            g, sub = key.split(".", 1)
            if g not in GASES or sub not in chan:
                raise ScenarioError(f"unknown key {key!r}", lineno)
            nested[g][sub] = _coerce(types[chan[sub].type], raw, lineno, key)
        else:
            if key not in top or key in GASES:
                raise ScenarioError(f"unknown key {key!r}", lineno)
            values[key] = _coerce(types[top[key].type], raw, lineno, key)
    if base is None:
        if "duration_hours" not in values:
            raise ScenarioError("duration_hours is required")
        base = default_scenario(max(values["duration_hours"], 24))
    for g in GASES:
        if nested[g]:
            values[g] = dataclasses.replace(getattr(base, g), **nested[g])
    return dataclasses.replace(base, **values)


def read_scenario(path: str | Path, base: DriftScenario | None = None) -> DriftScenario:
    return parse_scenario(Path(path).read_text(), base)
