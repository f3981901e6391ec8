import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqadapt.core import Flag, ModelKind
from aqadapt.experiment import (
    CellKey,
    ExperimentConfig,
    ExperimentReport,
    SizingError,
    cell_keys,
    derive_seed,
    initial_model,
    run_cell,
    run_grid,
    table,
)
from aqadapt.metrics import compute_metrics
from aqadapt.models import SnnConfig
from aqadapt.schedule import Mode

FAST = ExperimentConfig(
    initial_window=200,
    offsets=(0,),
    test_span=120,
    init_repeats=1,
    snn_hidden=(3,),
    elm_hidden=(15,),
    snn=SnnConfig(max_epochs=15),
    grid=((24, 12), (12, 4)),
)


@pytest.fixture(scope="module")
def usable(sim_data):
    return sim_data.usable_view()


@pytest.fixture(scope="module")
def inits(usable):
    return {kind: initial_model(usable, FAST, kind, 0, 0) for kind in ModelKind}


def cell_run(sim_data, inits, model, tau=None, pi=None, mode=None, config=FAST):
    key = CellKey(model, tau, pi, Mode(mode) if mode else None)
    kind = {"linear": ModelKind.MULTILINEAR, "snn": ModelKind.SNN, "isnn": ModelKind.SNN}.get(model, ModelKind.ELM)
    return run_cell(sim_data, config, key, 0, 0, inits[kind])


class TestSeeds:
    def test_stable_and_distinct(self):
        a = derive_seed(0, "init", "SNN", 0, 0)
        assert a == derive_seed(0, "init", "SNN", 0, 0)
        assert a != derive_seed(0, "init", "SNN", 0, 1)
        assert a != derive_seed(1, "init", "SNN", 0, 0)
        assert 0 <= a < 2**63


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.initial_window, c.test_span, c.init_repeats) == (672, 5075, 10)
        assert c.offsets == (0, 336, 672, 1008)
        assert len(c.grid) == 28

    def test_dict_round_trip(self):
        c = dataclasses.replace(FAST, modes=(Mode.OPPORTUNISTIC,), master_seed=9)
        assert ExperimentConfig.from_dict(c.as_dict()) == c

    @pytest.mark.parametrize(
        "kw", [{"models": ("bogus",)}, {"init_repeats": 0}, {"offsets": ()}, {"grid": ((12, 12),)}, {"clock": "x"}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            dataclasses.replace(FAST, **kw)

    def test_equal_pair_allowed_by_flag(self):
        assert dataclasses.replace(FAST, grid=((120, 120),), allow_pi_eq_tau=True).grid == ((120, 120),)


class TestRunCell:
    def test_static_one_generation(self, sim_data, inits):
        for m in ("linear", "snn", "elm"):
            t = cell_run(sim_data, inits, m)
            assert t.n_generations == 1
            assert len(t.y_pred) == FAST.test_span
            assert t.labels_consumed == 0

    def test_generation_boundaries(self, sim_data, inits):
        cfg = dataclasses.replace(FAST, test_span=48)
        t = cell_run(sim_data, inits, "aelm", 24, 12, "REGULAR", config=cfg)
        assert t.n_generations == 3
        assert np.flatnonzero(np.diff(t.generation)).tolist() == [11, 35]
        assert [a.active_from for a in t.adaptations] == [12, 36]

    @pytest.mark.parametrize("model", ["isnn", "aelm"])
    @pytest.mark.parametrize("mode", ["REGULAR", "OPPORTUNISTIC"])
    def test_trace_invariants(self, sim_data, inits, model, mode):
        tau, pi = 24, 12
        t = cell_run(sim_data, inits, model, tau, pi, mode)
        L = FAST.test_span
        assert t.causality_violations() == []
        assert np.all(np.diff(t.generation) >= 0)
        assert np.isfinite(t.y_pred).all()
        n_periods = (L - pi) // tau + 1 if mode == "REGULAR" else L // tau
        assert t.labels_consumed == pi * n_periods
        sizes = [a.train_size for a in t.adaptations]
        assert sizes == sorted(sizes)
        consumed = np.cumsum([a.n_new_labels for a in t.adaptations])
        assert sizes == (FAST.initial_window + consumed).tolist()

    def test_label_window_predicted_by_old_generation(self, sim_data, inits):
        t = cell_run(sim_data, inits, "aelm", 24, 12, "REGULAR")
        # samples 24..35 are the second label window and still use generation 1
        assert t.generation[24:36].tolist() == [1] * 12

    def test_isnn_retrains_on_union(self, sim_data, inits, usable):
        t = cell_run(sim_data, inits, "isnn", 12, 4, "REGULAR")
        assert t.hidden_size == 3
        assert t.adaptations[0].train_size == FAST.initial_window + 4
        assert t.adaptations[-1].train_size == FAST.initial_window + 4 * len(t.adaptations)

    def test_excluded_samples_never_scored(self, sim_data, inits):
        flags = sim_data.flags.copy()
        flags[250] |= Flag.OUTLIER
        no2 = sim_data.ref_no2.copy()
        no2[260] = np.nan
        dirty = sim_data.replace(flags=flags, ref_no2=no2)
        t = run_cell(dirty, FAST, CellKey("linear"), 0, 0)
        assert sim_data.timestamps[250] not in set(t.timestamps)
        assert sim_data.timestamps[260] not in set(t.timestamps)
        assert np.isfinite(t.y_true).all()

    def test_sizing_error(self, sim_data):
        cfg = dataclasses.replace(FAST, test_span=10_000)
        with pytest.raises(SizingError, match="10200"):
            run_cell(sim_data, cfg, CellKey("linear"), 0, 0)

    def test_deterministic(self, sim_data):
        a = run_cell(sim_data, FAST, CellKey("isnn", 24, 12, Mode.OPPORTUNISTIC), 0, 0)
        b = run_cell(sim_data, FAST, CellKey("isnn", 24, 12, Mode.OPPORTUNISTIC), 0, 0)
        np.testing.assert_array_equal(a.y_pred, b.y_pred)

    def test_shared_window(self, sim_data):
        cfg = dataclasses.replace(FAST, offsets=(0, 48), shared_window=True)
        a = run_cell(sim_data, cfg, CellKey("linear"), 0, 0)
        b = run_cell(sim_data, cfg, CellKey("linear"), 48, 0)
        assert a.timestamps[a.scored][0] == b.timestamps[b.scored][0]
        assert a.timestamps[-1] == b.timestamps[-1]

    def test_wallclock_clock(self, sim_data, inits):
        cfg = dataclasses.replace(FAST, clock="wallclock")
        t = cell_run(sim_data, inits, "aelm", 24, 12, "REGULAR", config=cfg)
        assert t.causality_violations() == []
        assert t.labels_consumed > 0


class TestRunGrid:
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls, sim_data):
        return run_grid(sim_data, FAST, keep_traces=True)

    def test_cells(self, report):
        assert set(report.cells) == set(cell_keys(FAST))
        assert len(report.cells) == 3 + 2 * 2 * 2

    def test_single_run_equals_trace_metrics(self, report):
        for t in report.traces:
            m = t.metrics(FAST).as_dict()
            c = report.cells[t.cell]
            assert c.n_runs == 1
            assert all(c.mean[k] == m[k] for k in c.mean)
            assert all(v == 0.0 for v in c.std.values())

    def test_trace_metrics_use_scored_samples(self, report):
        t = report.traces[0]
        assert t.metrics(FAST) == compute_metrics(t.y_true, t.y_pred)

    def test_bit_identical(self, sim_data, report, tmp_path):
        again = run_grid(sim_data, FAST)
        report.write_json(tmp_path / "a.json")
        again.write_json(tmp_path / "b.json")
        report.to_csv(tmp_path / "a.csv")
        again.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_adding_cells_keeps_others(self, sim_data, report):
        smaller = run_grid(sim_data, dataclasses.replace(FAST, grid=((24, 12),), models=("isnn", "snn")))
        for key, c in smaller.cells.items():
            assert c.mean == report.cells[key].mean

    def test_workers_do_not_change_results(self, sim_data, report):
        cfg = dataclasses.replace(FAST, models=("linear", "aelm"), grid=((24, 12),))
        serial = run_grid(sim_data, cfg)
        parallel = run_grid(sim_data, cfg, workers=2)
        assert serial.to_json() == parallel.to_json()

    def test_json_round_trip(self, report):
        back = ExperimentReport.from_json(report.to_json())
        assert back.to_json() == report.to_json()

    def test_csv_notes_and_rows(self, report, tmp_path):
        report.to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert '"mane_normalizer": "range"' in lines[0]
        assert lines[1] == "model,strategy,tau,pi,mode,metric,mean,std,n_runs"
        assert len(lines) == 2 + 5 * len(report.cells)

    def test_table_marks_absent(self, report):
        rows = table(report, "isnn", "REGULAR")
        assert rows[0] == ["P\\T", "12", "24"]
        assert rows[1][0] == "4" and rows[2][0] == "12"
        assert rows[2][1] == "-"
        with pytest.raises(KeyError):
            table(report, "linear", "REGULAR")

    def test_sizing_error_surfaces(self, sim_data):
        with pytest.raises(SizingError):
            run_grid(sim_data, dataclasses.replace(FAST, offsets=(0, 5000)))


class TestRepeats:
    @settings(max_examples=5, deadline=None)
    @given(master=st.integers(0, 2**31))
    def test_initial_seed_per_repeat(self, usable, master):
        cfg = dataclasses.replace(FAST, master_seed=master)
        a = initial_model(usable, cfg, ModelKind.ELM, 0, 0).model
        b = initial_model(usable, cfg, ModelKind.ELM, 0, 1).model
        assert not np.array_equal(a.centers, b.centers)
