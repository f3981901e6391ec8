import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqadapt.schedule import PIS, TAUS, Mode, UpdateSchedule, enumerate_grid, plan, plan_wallclock

from oracles import grid_oracle

schedules = st.sampled_from(enumerate_grid()).flatmap(
    lambda tp: st.builds(
        UpdateSchedule,
        tau=st.just(tp[0]),
        pi=st.just(tp[1]),
        mode=st.sampled_from(list(Mode)),
        seed=st.integers(0, 2**31),
    )
)


class TestGrid:
    def test_strict_pairs(self):
        grid = enumerate_grid()
        assert len(grid) == 28
        assert grid == grid_oracle(TAUS, PIS)
        assert (2, 1) in grid
        assert (12, 12) not in grid

    def test_allow_equal(self):
        grid = enumerate_grid(allow_equal=True)
        assert grid == grid_oracle(TAUS, PIS, allow_equal=True)
        assert {(12, 12), (24, 24), (120, 120)} <= set(grid)
        assert len(grid) == 31

    def test_order(self):
        grid = enumerate_grid()
        assert grid == sorted(grid)


class TestSchedule:
    @pytest.mark.parametrize("tau,pi", [(12, 12), (2, 4), (1, 0), (0, 0)])
    def test_implausible(self, tau, pi):
        with pytest.raises(ValueError, match="implausible"):
            UpdateSchedule(tau, pi)

    def test_equal_allowed_by_flag(self):
        assert UpdateSchedule(120, 120, allow_equal=True).pi == 120

    def test_mode_from_string(self):
        assert UpdateSchedule(24, 1, "OPPORTUNISTIC").mode is Mode.OPPORTUNISTIC


class TestPlan:
    def test_regular_example(self):
        p = plan(UpdateSchedule(24, 12), 48)
        assert [e.labels for e in p.entries] == [tuple(range(12)), tuple(range(24, 36))]
        assert [e.adaptation_point for e in p.entries] == [11, 35]

    def test_opportunistic_single_label(self):
        p = plan(UpdateSchedule(24, 1, Mode.OPPORTUNISTIC, seed=5), 24)
        assert len(p.entries) == 1
        (e,) = p.entries
        assert len(e.labels) == 1 and 0 <= e.labels[0] < 24
        assert e.adaptation_point == 23

    def test_densest_plan(self):
        p = plan(UpdateSchedule(2, 1), 100)
        assert [e.labels[0] for e in p.entries] == list(range(0, 100, 2))
        assert p.n_labels == 50

    def test_regular_partial_period(self):
        # 30 samples: the second window 24..35 does not fit, 24..27 with pi=4 does
        assert len(plan(UpdateSchedule(24, 12), 30).entries) == 1
        assert len(plan(UpdateSchedule(24, 4), 30).entries) == 2

    def test_opportunistic_needs_full_period(self):
        assert len(plan(UpdateSchedule(24, 4, Mode.OPPORTUNISTIC), 47).entries) == 1

    def test_bad_length(self):
        with pytest.raises(ValueError):
            plan(UpdateSchedule(2, 1), 0)

    def test_csv(self, tmp_path):
        path = tmp_path / "plan.csv"
        plan(UpdateSchedule(24, 2), 48).to_csv(path)
        assert path.read_text().splitlines() == ["period,label_indices,adaptation_point", "0,0 1,1", "1,24 25,25"]

    @settings(max_examples=200, deadline=None)
    @given(s=schedules, length=st.integers(1, 5000))
    def test_invariants(self, s, length):
        p = plan(s, length)
        seen = set()
        for e in p.entries:
            lo, hi = e.period * s.tau, (e.period + 1) * s.tau
            assert all(lo <= i < hi and i < length for i in e.labels)
            assert len(e.labels) == s.pi
            assert e.adaptation_point >= max(e.labels)
            assert e.adaptation_point < length
            assert seen.isdisjoint(e.labels)
            seen.update(e.labels)
        if s.mode is Mode.OPPORTUNISTIC:
            assert len(p.entries) == length // s.tau

    @settings(max_examples=50, deadline=None)
    @given(tp=st.sampled_from(enumerate_grid()), length=st.integers(1, 3000), a=st.integers(0, 999), b=st.integers(0, 999))
    def test_regular_seed_independent(self, tp, length, a, b):
        assert plan(UpdateSchedule(*tp, seed=a), length).entries == plan(UpdateSchedule(*tp, seed=b), length).entries

    @settings(max_examples=50, deadline=None)
    @given(tp=st.sampled_from(enumerate_grid()), length=st.integers(1, 3000), seed=st.integers(0, 999))
    def test_opportunistic_reproducible(self, tp, length, seed):
        s = UpdateSchedule(*tp, Mode.OPPORTUNISTIC, seed)
        assert plan(s, length) == plan(s, length)

    def test_opportunistic_uses_seed(self):
        a = plan(UpdateSchedule(720, 24, Mode.OPPORTUNISTIC, seed=1), 7200)
        b = plan(UpdateSchedule(720, 24, Mode.OPPORTUNISTIC, seed=2), 7200)
        assert a.entries != b.entries

    def test_opportunistic_roughly_uniform(self):
        p = plan(UpdateSchedule(12, 1, Mode.OPPORTUNISTIC, seed=0), 12 * 6000)
        pos = np.bincount([e.labels[0] % 12 for e in p.entries], minlength=12)
        assert pos.min() > 400 and pos.max() < 600


class TestWallclock:
    def test_no_gaps_matches_index_plan(self):
        s = UpdateSchedule(24, 4)
        assert plan_wallclock(s, range(100)).entries == plan(s, 100).entries

    def test_gap_drops_labels(self):
        hours = [h for h in range(48) if not 24 <= h < 26]
        p = plan_wallclock(UpdateSchedule(24, 4), hours)
        # hours 26, 27 survive as indices 24, 25
        assert [e.labels for e in p.entries] == [(0, 1, 2, 3), (24, 25)]
        assert p.entries[1].adaptation_point == 25

    def test_period_without_labels_dropped(self):
        hours = [h for h in range(48) if not 24 <= h < 28]
        p = plan_wallclock(UpdateSchedule(24, 4), hours)
        assert len(p.entries) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            plan_wallclock(UpdateSchedule(2, 1), [])
