import numpy as np
import pytest

from patsim import ingest, vocab
from patsim.errors import BadConfig, DimensionMismatch, EmptyCohort
from patsim.framing import (
    aggregate,
    bucketize,
    fit_aggregation_scaling,
    fit_scaling,
    impute_and_scale,
    impute_frame,
    read_frames,
    read_scaling_stats,
    scale_aggregates,
    sparsity,
    write_frames,
    write_scaling_stats,
)

HR = vocab.DYNAMIC_INDEX["Heart rate"]
AGE = vocab.STATIC_INDEX["Age"]


def ev(pid, minute, variable, value):
    return ingest.Event(pid, minute, variable, value)


def hand_fixture():
    """Three patients with hand-computable buckets, scaling and imputation."""
    a = bucketize("a", [
        ev("a", 10, "Heart rate", 80.0),
        ev("a", 50, "Heart rate", 90.0),
        ev("a", 130, "Heart rate", 100.0),
        ev("a", 0, "Age", 40.0),
    ], label=1)
    b = bucketize("b", [
        ev("b", 120, "Heart rate", 70.0),
        ev("b", 0, "Age", 60.0),
    ], label=0)
    c = bucketize("c", [], label=0)
    return a, b, c


class TestBucketize:
    def test_bucket_mean(self):
        a, _, _ = hand_fixture()
        assert a.dynamic[HR, 0] == 85.0
        assert a.dynamic[HR, 1] == 100.0
        assert a.mask[HR, 0] and a.mask[HR, 1]
        assert not a.mask[HR, 2:].any()
        assert a.statics[AGE] == 40.0

    def test_half_open_boundary(self):
        b = bucketize("b", [ev("b", 120, "Heart rate", 70.0)], label=0)
        assert not b.mask[HR, 0]
        assert b.mask[HR, 1] and b.dynamic[HR, 1] == 70.0

    def test_final_minute_lands_in_last_bucket(self):
        f = bucketize("x", [ev("x", 2879, "Heart rate", 66.0)], label=0)
        assert f.mask[HR, 23] and f.dynamic[HR, 23] == 66.0

    def test_one_hour_windows(self):
        f = bucketize("x", [ev("x", 59, "Heart rate", 70.0)], label=0,
                      window_hours=1, horizon_hours=48)
        assert f.dynamic.shape == (36, 48)
        assert f.mask[HR, 0]

    def test_bad_config(self):
        with pytest.raises(BadConfig):
            bucketize("x", [], label=0, window_hours=5, horizon_hours=48)

    def test_partition_property(self, rng):
        # every in-window event lands in exactly one bucket
        events = []
        expected = {}
        for _ in range(200):
            minute = int(rng.integers(0, 2880))
            value = float(rng.uniform(50, 100))
            events.append(ev("p", minute, "Heart rate", value))
            expected.setdefault(minute // 120, []).append(value)
        events.sort(key=lambda e: e.minute)
        f = bucketize("p", events, label=0)
        for t in range(24):
            if t in expected:
                assert f.mask[HR, t]
                assert f.dynamic[HR, t] == pytest.approx(np.mean(expected[t]))
            else:
                assert not f.mask[HR, t]
        assert int(f.mask[HR].sum()) == len(expected)


class TestSparsity:
    def test_extremes(self):
        a, b, c = hand_fixture()
        full = bucketize("full", [
            ev("full", t * 120, v, 1.0)
            for v in vocab.DYNAMIC_VARIABLES for t in range(24)
        ], label=0)
        assert sparsity([full]) == 0.0
        assert sparsity([c]) == 1.0

    def test_empty(self):
        with pytest.raises(EmptyCohort):
            sparsity([])

    def test_mixed(self):
        a, b, c = hand_fixture()
        total = 3 * 36 * 24
        observed = 2 + 1 + 0
        assert sparsity([a, b, c]) == pytest.approx((total - observed) / total)


class TestScaling:
    def test_min_max_and_means(self):
        a, b, c = hand_fixture()
        stats = fit_scaling([a, b, c])
        assert stats.dyn_min[HR] == 70.0 and stats.dyn_max[HR] == 100.0
        assert stats.dyn_bucket_mean[HR, 0] == 85.0
        assert stats.dyn_bucket_mean[HR, 1] == pytest.approx(85.0)
        assert np.isnan(stats.dyn_bucket_mean[HR, 5])
        assert stats.dyn_mean[HR] == pytest.approx((85 + 100 + 70) / 3)
        assert not stats.dyn_degenerate[HR]
        assert stats.dyn_degenerate[vocab.DYNAMIC_INDEX["Glucose"]]
        assert stats.static_min[AGE] == 40.0 and stats.static_max[AGE] == 60.0

    def test_empty(self):
        with pytest.raises(EmptyCohort):
            fit_scaling([])

    def test_impute_and_scale_hand_values(self):
        a, b, c = hand_fixture()
        stats = fit_scaling([a, b, c])
        da = impute_and_scale(a, stats)
        assert da.dynamic[HR, 0] == 0.5
        assert da.dynamic[HR, 1] == 1.0
        assert (da.dynamic[HR, 2:] == 1.0).all()        # carried forward
        assert da.statics[AGE] == 0.0

        db = impute_and_scale(b, stats)
        assert db.dynamic[HR, 0] == 0.5                 # leading gap -> bucket mean
        assert db.dynamic[HR, 1] == 0.0
        assert (db.dynamic[HR, 2:] == 0.0).all()
        assert db.statics[AGE] == 1.0

        dc = impute_and_scale(c, stats)
        assert (dc.dynamic[HR] == 0.5).all()            # bucket/pooled means
        assert dc.statics[AGE] == 0.5                   # static mean of 40, 60
        # degenerate variables everywhere at 0.5
        glucose = vocab.DYNAMIC_INDEX["Glucose"]
        assert (da.dynamic[glucose] == 0.5).all()

    def test_mask_preserved(self):
        a, b, c = hand_fixture()
        stats = fit_scaling([a, b, c])
        da = impute_and_scale(a, stats)
        assert (da.mask == a.mask).all()

    def test_clamp_above_training_max(self):
        a, b, c = hand_fixture()
        stats = fit_scaling([a, b, c])
        hot = bucketize("hot", [ev("hot", 10, "Heart rate", 140.0)], label=0)
        assert impute_and_scale(hot, stats).dynamic[HR, 0] == 1.0

    def test_impute_identity_on_dense(self, rng):
        from util import random_dense_frames
        dense_raw = random_dense_frames(4, rng)
        stats = fit_scaling(dense_raw)
        for f in dense_raw:
            out = impute_frame(f, stats)
            assert (out.dynamic == f.dynamic).all()
            assert (out.statics == f.statics).all()

    def test_scaling_bounds_and_endpoints(self, rng):
        frames = []
        for i in range(6):
            events = []
            for v in ("Heart rate", "Glucose", "pH"):
                for t in range(24):
                    if rng.random() < 0.7:
                        events.append(ev(f"p{i}", t * 120 + 5, v, float(rng.uniform(1, 9))))
            events.sort(key=lambda e: (e.minute, e.variable))
            frames.append(bucketize(f"p{i}", events, label=i % 2))
        stats = fit_scaling(frames)
        dense = [impute_and_scale(f, stats) for f in frames]
        values = np.stack([d.dynamic for d in dense])
        assert values.min() >= 0.0 and values.max() <= 1.0
        for v in (HR, vocab.DYNAMIC_INDEX["Glucose"]):
            observed = np.concatenate([d.dynamic[v][f.mask[v]]
                                       for d, f in zip(dense, frames)])
            assert observed.min() == 0.0 and observed.max() == 1.0

    def test_dimension_mismatch(self):
        a, b, c = hand_fixture()
        stats = fit_scaling([a, b, c])
        short = bucketize("s", [], label=0, window_hours=4, horizon_hours=48)
        with pytest.raises(DimensionMismatch):
            impute_and_scale(short, stats)


class TestAggregate:
    def test_six_statistics(self):
        f = aggregate("p", [
            ev("p", 10, "Heart rate", 3.0),
            ev("p", 20, "Heart rate", 1.0),
            ev("p", 30, "Heart rate", 2.0),
        ], label=0)
        assert list(f.table[HR]) == [1.0, 3.0, 2.0, 3.0, 2.0, 3.0]

    def test_single_value(self):
        f = aggregate("p", [ev("p", 10, "Heart rate", 7.0)], label=0)
        assert list(f.table[HR]) == [7.0, 7.0, 7.0, 7.0, 7.0, 1.0]

    def test_even_count_median(self):
        f = aggregate("p", [
            ev("p", 10, "Heart rate", 1.0),
            ev("p", 20, "Heart rate", 3.0),
        ], label=0)
        assert f.table[HR, 2] == 2.0

    def test_zero_events(self):
        f = aggregate("p", [], label=0)
        assert f.table[HR, 5] == 0.0
        assert np.isnan(f.table[HR, :5]).all()

    def test_permutation_sensitivity(self, rng):
        minutes = sorted(int(m) for m in rng.choice(2800, size=9, replace=False))
        values = rng.uniform(1, 9, size=9)
        for _ in range(10):
            perm = rng.permutation(9)
            f = aggregate("p", [ev("p", m, "Heart rate", float(values[perm][i]))
                                for i, m in enumerate(minutes)], label=0)
            assert f.table[HR, 0] == values.min()
            assert f.table[HR, 1] == values.max()
            assert f.table[HR, 2] == pytest.approx(np.median(values))
            assert f.table[HR, 5] == 9.0
            assert f.table[HR, 3] == values[perm][0]
            assert f.table[HR, 4] == values[perm][-1]

    def test_scale_fills_missing_from_training(self):
        tr1 = aggregate("t1", [ev("t1", 10, "Heart rate", 10.0)], label=0)
        tr2 = aggregate("t2", [ev("t2", 10, "Heart rate", 20.0),
                               ev("t2", 20, "Heart rate", 30.0)], label=1)
        stats = fit_aggregation_scaling([tr1, tr2])
        empty = aggregate("q", [], label=0)
        scaled = scale_aggregates(empty, stats)
        # count 0 scales to 0 (training counts 1 and 2), means fill the rest
        assert scaled.table[HR, 5] == 0.0
        assert scaled.table[HR, 0] == pytest.approx((15 - 10) / 10)   # mean of 10,20


def test_frames_file_roundtrip(tmp_path, rng):
    from util import random_dense_frames
    frames = random_dense_frames(5, rng)
    frames[2].mask[:, ::3] = False
    fpath, mpath = tmp_path / "f.csv", tmp_path / "m.csv"
    write_frames(frames, fpath, mpath)
    back = read_frames(fpath, mpath)
    for orig, new in zip(frames, back):
        assert orig.patient_id == new.patient_id and orig.label == new.label
        assert (orig.dynamic == new.dynamic).all()
        assert (orig.mask == new.mask).all()
        assert (orig.statics == new.statics).all()


def test_scaling_stats_roundtrip(tmp_path):
    a, b, c = hand_fixture()
    stats = fit_scaling([a, b, c])
    path = tmp_path / "stats.txt"
    write_scaling_stats(stats, path)
    back = read_scaling_stats(path)
    np.testing.assert_array_equal(back.dyn_min, stats.dyn_min)
    np.testing.assert_array_equal(back.dyn_bucket_mean, stats.dyn_bucket_mean)
    np.testing.assert_array_equal(back.dyn_degenerate, stats.dyn_degenerate)
    np.testing.assert_array_equal(back.static_mean, stats.static_mean)
    da = impute_and_scale(a, stats)
    db = impute_and_scale(a, back)
    assert (da.dynamic == db.dynamic).all()
