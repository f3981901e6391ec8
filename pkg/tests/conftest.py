from __future__ import annotations

import numpy as np
import pytest

from aqadapt.core import Dataset, N_FEATURES
from aqadapt.simulate import default_scenario, generate

START = np.datetime64("2019-01-01T00:00:00", "s")


def make_dataset(n: int, seed: int = 0, labeled: bool = True, start=START) -> Dataset:
    """Plausible hourly records with an affine NO2 label."""
    rng = np.random.default_rng(seed)
    X = rng.normal(200.0, 15.0, size=(n, N_FEATURES))
    X[:, 6] = rng.uniform(5.0, 35.0, n)
    X[:, 7] = rng.uniform(20.0, 90.0, n)
    y = np.abs(0.4 * (X[:, 0] - X[:, 1]) + 20.0 + rng.normal(0, 1.0, n)) if labeled else np.full(n, np.nan)
    return Dataset(
        timestamps=start + np.arange(n) * np.timedelta64(3600, "s"),
        features=X,
        ref_no2=y,
        ref_co=np.full(n, 0.3),
        coverage=np.ones(n),
        flags=np.zeros(n, dtype=np.int64),
        meta={"source": "test"},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sim_small():
    """Sixty simulated days; enough for every model family."""
    return generate(default_scenario(24 * 60, seed=3))


@pytest.fixture(scope="session")
def sim_data(sim_small):
    return sim_small.dataset


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Remember one acceptance verdict for the terminal summary."""
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
