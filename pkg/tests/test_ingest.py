import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqadapt.core import DataError, Flag
from aqadapt.ingest import (
    OrderingError,
    RawSample,
    aggregate_hourly,
    join_reference,
    merge_datasets,
    read_raw_csv,
    read_reference_csv,
)

from conftest import START, make_dataset

SEC = np.timedelta64(1, "s")
HOUR = np.timedelta64(3600, "s")


def raw_hour(values, hour=0, spacing=6):
    """Samples for one hour at a fixed spacing in seconds."""
    values = np.asarray(values, dtype=float)
    ts = START + hour * HOUR + np.arange(len(values)) * spacing * SEC
    return ts, np.repeat(values[:, None], 8, axis=1) if values.ndim == 1 else values


def concat(*parts):
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


class TestAggregate:
    def test_identical_samples(self):
        d = aggregate_hourly(raw_hour(np.full(600, 7.5)))
        assert len(d) == 1
        np.testing.assert_array_equal(d.features[0], np.full(8, 7.5))
        assert d.coverage[0] == 1.0
        assert d.flags[0] == 0

    def test_two_level_mean(self):
        d = aggregate_hourly(raw_hour(np.r_[np.full(300, 2.0), np.full(300, 4.0)]))
        np.testing.assert_allclose(d.features[0], 3.0, rtol=0, atol=1e-12)
        assert d.coverage[0] == 1.0

    def test_low_coverage(self):
        d = aggregate_hourly(raw_hour(np.ones(60), spacing=60), min_coverage=0.75)
        assert d.coverage[0] == pytest.approx(0.1)
        assert d.flags[0] & Flag.LOW_COVERAGE

    def test_coverage_capped(self):
        d = aggregate_hourly(raw_hour(np.ones(900), spacing=4))
        assert d.coverage[0] == 1.0

    def test_hour_boundaries_and_gaps(self):
        raw = concat(raw_hour(np.ones(600), 0), raw_hour(np.full(600, 2.0), 1), raw_hour(np.full(600, 3.0), 3))
        d = aggregate_hourly(raw)
        assert (d.timestamps - START).astype("timedelta64[h]").astype(int).tolist() == [0, 1, 3]
        assert d.features[:, 0].tolist() == [1.0, 2.0, 3.0]
        gap = (d.flags & Flag.GAP_ADJACENT) != 0
        assert gap.tolist() == [False, True, True]
        assert not d.labeled.any()

    def test_raw_sample_objects(self):
        samples = [RawSample(START + i * 6 * SEC, tuple(float(i) for _ in range(8))) for i in range(4)]
        d = aggregate_hourly(samples)
        assert d.features[0, 0] == pytest.approx(1.5)

    def test_unsorted_names_index(self):
        ts, values = raw_hour(np.ones(10))
        ts = ts.copy()
        ts[[4, 5]] = ts[[5, 4]]
        with pytest.raises(OrderingError) as exc:
            aggregate_hourly((ts, values))
        assert exc.value.index == 5

    def test_empty(self):
        d = aggregate_hourly((np.array([], dtype="datetime64[s]"), np.zeros((0, 8))))
        assert len(d) == 0

    @settings(max_examples=50, deadline=None)
    @given(
        values=st.lists(st.floats(min_value=-500, max_value=500, allow_nan=False), min_size=1, max_size=80),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_permutation_invariant_within_hour(self, values, seed):
        ts, v = raw_hour(values)
        shuffled = v[np.random.default_rng(seed).permutation(len(v))]
        a = aggregate_hourly((ts, v))
        b = aggregate_hourly((ts, shuffled))
        np.testing.assert_array_equal(a.features, b.features)

    @settings(max_examples=30, deadline=None)
    @given(
        n_a=st.integers(1, 4),
        n_b=st.integers(1, 4),
        gap=st.integers(0, 3),
        seed=st.integers(0, 1000),
    )
    def test_disjoint_concat_equals_merge(self, n_a, n_b, gap, seed):
        rng = np.random.default_rng(seed)
        parts_a = [raw_hour(rng.normal(0, 5, (rng.integers(1, 50), 8)), h) for h in range(n_a)]
        parts_b = [raw_hour(rng.normal(0, 5, (rng.integers(1, 50), 8)), n_a + gap + h) for h in range(n_b)]
        a, b = concat(*parts_a), concat(*parts_b)
        whole = aggregate_hourly(concat(a, b))
        merged = merge_datasets(aggregate_hourly(a), aggregate_hourly(b))
        assert whole.equals(merged)


class TestJoin:
    def test_all_match(self):
        d = make_dataset(5, labeled=False)
        ref = [(t, 10.0 + i, 0.2) for i, t in enumerate(d.timestamps)]
        out, ignored = join_reference(d, ref)
        assert ignored == 0
        assert out.ref_no2.tolist() == [10.0, 11.0, 12.0, 13.0, 14.0]
        assert len(out) == 5

    def test_no_refs_identity(self):
        d = make_dataset(5, labeled=False)
        out, ignored = join_reference(d, [])
        assert out.equals(d)
        assert ignored == 0

    def test_unmatched_ref_ignored(self):
        d = make_dataset(5, labeled=False)
        ref = [(d.timestamps[1], 3.0, 0.1), (d.timestamps[-1] + 10 * HOUR, 9.0, 0.1)]
        out, ignored = join_reference(d, ref)
        assert ignored == 1
        assert np.isnan(out.ref_no2[[0, 2, 3, 4]]).all()
        assert out.ref_no2[1] == 3.0

    def test_duplicate_ref_hour(self):
        d = make_dataset(3, labeled=False)
        with pytest.raises(DataError, match="duplicate reference hour"):
            join_reference(d, [(d.timestamps[0], 1.0, 0.1), (d.timestamps[0], 2.0, 0.1)])

    def test_misaligned_ref(self):
        d = make_dataset(3, labeled=False)
        with pytest.raises(DataError, match="hour-aligned"):
            join_reference(d, [(d.timestamps[0] + 30 * SEC, 1.0, 0.1)])


class TestFiles:
    def test_read_raw_and_reference(self, tmp_path):
        raw = tmp_path / "raw.csv"
        raw.write_text(
            "timestamp,we_no2,ae_no2,we_co,ae_co,we_o3,ae_o3,temp,rh\n"
            "2019-01-01T00:00:00Z,1,2,3,4,5,6,20,50\n"
            "2019-01-01T00:00:06Z,3,2,3,4,5,6,20,50\n"
        )
        ref = tmp_path / "ref.csv"
        ref.write_text("timestamp,no2_ppb,co_ppm\n2019-01-01T00:00:00Z,12.5,\n")
        d = aggregate_hourly(read_raw_csv(raw))
        out, ignored = join_reference(d, read_reference_csv(ref))
        assert out.features[0, 0] == 2.0
        assert out.ref_no2[0] == 12.5
        assert np.isnan(out.ref_co[0])

    def test_bad_header(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text("time,a\n")
        with pytest.raises(DataError, match="expected header"):
            read_raw_csv(p)
