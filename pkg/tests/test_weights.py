import io

import numpy as np
import pytest

from patsim import vocab
from patsim.errors import (
    BadConfig,
    KTooLarge,
    MalformedRow,
    NegativeWeight,
    SingleClassCohort,
    UnknownVariable,
)
from patsim.knn import FeatureWeights, Model, neighbors, soft_score
from patsim.weights import (
    TrainConfig,
    _chi_square_score,
    _error_value,
    _gini_score,
    _information_gain_score,
    filter_score,
    filter_weights,
    gradient,
    load_manual_weights,
    loo_neighbor_sets,
    save_weights,
    train_gd,
    training_error,
)
from util import random_dense_frames

HR = vocab.DYNAMIC_INDEX["Heart rate"]


def two_tight_clusters(rng, n_per_class=8, gap=0.8):
    """Two well-separated clusters, one per label: LOO neighbors agree."""
    frames = random_dense_frames(2 * n_per_class, rng)
    for i, f in enumerate(frames):
        label = i % 2
        f.label = label
        f.dynamic = np.full((36, 24), 0.1 + gap * label) + 0.01 * rng.random((36, 24))
        f.statics = np.full(4, 0.1 + gap * label)
    return frames


class TestTrainingError:
    def test_pure_clusters_give_zero_error(self, rng):
        frames = two_tight_clusters(rng)
        e = training_error(frames, FeatureWeights.uniform(), k=3)
        # scores are not exactly 0/1 (kernel in (0,1]) but must be tiny
        assert e < 1e-8

    def test_naive_loop_oracle(self, small_cohort, rng):
        w = FeatureWeights(rng.random(vocab.N_VARIABLES) + 0.1)
        k = 5
        fast = training_error(small_cohort, w, k=k)
        model = Model(small_cohort, w, k=k)
        slow = 0.0
        for f in small_cohort:
            ns = neighbors(f, model, leave_one_out=True)
            yhat = soft_score(ns)
            slow += (f.label - yhat) ** 2 + ((1 - f.label) - (1 - yhat)) ** 2
        assert fast == pytest.approx(slow, rel=1e-9)

    def test_half_score_identity(self, rng):
        # with every score at 0.5, both class terms contribute 0.25 apiece
        labels = (rng.random(16) < 0.4).astype(float)
        assert _error_value(np.full(16, 0.5), labels) == pytest.approx(0.5 * 16)

    def test_k_too_large(self, small_cohort):
        with pytest.raises(KTooLarge):
            training_error(small_cohort, FeatureWeights.uniform(), k=30)

    def test_single_class(self, rng):
        frames = random_dense_frames(10, rng)
        for f in frames:
            f.label = 1
        with pytest.raises(SingleClassCohort):
            training_error(frames, FeatureWeights.uniform(), k=3)


class TestGradient:
    def test_matches_finite_differences(self, small_cohort, rng):
        w0 = rng.random(vocab.N_VARIABLES) + 0.2
        k = 5
        sets = loo_neighbor_sets(small_cohort, FeatureWeights(w0), k=k)
        grad = gradient(small_cohort, FeatureWeights(w0), k=k)
        h = 1e-5
        for v in range(vocab.N_VARIABLES):
            wp, wm = w0.copy(), w0.copy()
            wp[v] += h
            wm[v] -= h
            ep = training_error(small_cohort, FeatureWeights(wp), k=k, neighbor_sets=sets)
            em = training_error(small_cohort, FeatureWeights(wm), k=k, neighbor_sets=sets)
            fd = (ep - em) / (2 * h)
            rel = abs(grad[v] - fd) / max(abs(grad[v]), abs(fd), 1e-8)
            assert rel < 1e-4

    def test_constant_variable_has_zero_component(self, rng):
        frames = random_dense_frames(12, rng)
        for f in frames:
            f.dynamic[HR] = 0.42
        grad = gradient(frames, FeatureWeights.uniform(), k=4)
        assert grad[HR] == 0.0

    def test_zero_at_zero_error(self, rng):
        frames = two_tight_clusters(rng)
        grad = gradient(frames, FeatureWeights.uniform(), k=3)
        assert np.abs(grad).max() < 1e-6


class TestTrainGd:
    def test_tiny_learning_rate_keeps_weights(self, small_cohort):
        cfg = TrainConfig(learning_rate=1e-30, max_epochs=10, k=5)
        learned, trace = train_gd(small_cohort, cfg)
        assert (learned.values == 1.0).all()
        assert trace.stop_reason == "converged"

    def test_planted_variable_wins(self, rng):
        # one informative variable, 35 noise variables
        frames = random_dense_frames(80, rng, prevalence=0.4)
        for f in frames:
            f.dynamic[HR] = 0.25 + 0.5 * f.label + 0.05 * rng.random(24)
        cfg = TrainConfig(k=7, max_epochs=60)
        learned, _ = train_gd(frames, cfg)
        noise = np.delete(learned.values[: vocab.N_DYNAMIC], HR)
        assert learned.values[HR] > noise.max()

    def test_best_so_far_non_increasing(self, small_cohort):
        _, trace = train_gd(small_cohort, TrainConfig(k=5, max_epochs=25))
        best = trace.best_so_far
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert trace.best_error == pytest.approx(min(trace.errors))
        assert trace.epochs_run <= 25

    def test_converged_stop_reason(self, rng):
        frames = two_tight_clusters(rng)
        _, trace = train_gd(frames, TrainConfig(k=3, max_epochs=100))
        assert trace.stop_reason == "converged"
        assert trace.epochs_run < 100

    def test_single_class_rejected(self, rng):
        frames = random_dense_frames(12, rng)
        for f in frames:
            f.label = 0
        with pytest.raises(SingleClassCohort):
            train_gd(frames, TrainConfig(k=3))

    def test_needs_k_plus_one(self, rng):
        frames = random_dense_frames(5, rng)
        with pytest.raises(KTooLarge):
            train_gd(frames, TrainConfig(k=5))

    def test_non_negative_weights(self, small_cohort):
        learned, _ = train_gd(small_cohort, TrainConfig(k=5, learning_rate=2.0,
                                                        max_epochs=15))
        assert learned.values.min() >= 0.0

    def test_active_mask_pins_inactive_to_zero(self, small_cohort):
        active = np.zeros(vocab.N_VARIABLES, dtype=bool)
        active[: vocab.N_DYNAMIC] = True
        learned, _ = train_gd(small_cohort, TrainConfig(k=5, max_epochs=5), active=active)
        assert (learned.values[vocab.N_DYNAMIC:] == 0.0).all()

    def test_bad_config(self):
        with pytest.raises(BadConfig):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(BadConfig):
            TrainConfig(patience=0)


class TestFilterScores:
    def test_chi_square_hand_table(self):
        assert _chi_square_score(np.array([[10.0, 0.0], [0.0, 10.0]])) == pytest.approx(20.0)

    def test_information_gain_pure_balanced(self):
        assert _information_gain_score(np.array([[10.0, 0.0], [0.0, 10.0]])) == pytest.approx(1.0)

    def test_gini_pure_balanced(self):
        assert _gini_score(np.array([[10.0, 0.0], [0.0, 10.0]])) == pytest.approx(0.5)

    def test_pure_split_from_data(self, rng):
        frames = random_dense_frames(40, rng)
        for i, f in enumerate(frames):
            f.label = i % 2
            f.dynamic[HR] = f.label + 0.01 * rng.random(24)
        scores = filter_score(frames, "information_gain")
        assert scores[HR] == pytest.approx(1.0, abs=1e-6)

    def test_independent_variable_scores_zero(self, rng):
        # identical bin distribution per class by construction
        frames = random_dense_frames(40, rng)
        values = np.tile(np.arange(20) / 19.0, 2)
        for i, f in enumerate(frames):
            f.label = i % 2
            f.dynamic[HR] = values[i // 2 if i % 2 == 0 else 20 + i // 2 - 10]
        # simpler: equal class counts inside every bin
        for b in range(20):
            frames[2 * b].dynamic[HR] = b / 19.0
            frames[2 * b].label = 0
            frames[2 * b + 1].dynamic[HR] = b / 19.0
            frames[2 * b + 1].label = 1
        chi = filter_score(frames, "chi_square")
        gin = filter_score(frames, "gini")
        assert chi[HR] == pytest.approx(0.0, abs=1e-9)
        assert gin[HR] == pytest.approx(0.0, abs=1e-9)

    def test_planted_ranks_first_all_filters(self, rng):
        frames = random_dense_frames(60, rng)
        for f in frames:
            f.dynamic[HR] = 0.3 + 0.4 * f.label + 0.05 * rng.random(24)
        for method in ("chi_square", "information_gain", "gini"):
            scores = filter_score(frames, method)
            assert int(np.argmax(scores)) == HR

    def test_normalization_sums_to_variable_count(self, small_cohort):
        for method in ("chi_square", "information_gain", "gini"):
            fw = filter_weights(small_cohort, method)
            assert fw.values.sum() == pytest.approx(vocab.N_VARIABLES)
            assert fw.values.min() >= 0.0

    def test_single_class_rejected(self, rng):
        frames = random_dense_frames(10, rng)
        for f in frames:
            f.label = 0
        with pytest.raises(SingleClassCohort):
            filter_weights(frames, "chi_square")

    def test_unknown_method(self, small_cohort):
        with pytest.raises(BadConfig):
            filter_score(small_cohort, "relief")


class TestManualWeights:
    def test_full_file(self):
        text = "variable,weight\n" + "".join(f"{n},1.0\n" for n in vocab.ALL_VARIABLES)
        fw = load_manual_weights(io.StringIO(text))
        assert (fw.values == 1.0).all()

    def test_partial_file_defaults_zero(self, caplog):
        with caplog.at_level("WARNING"):
            fw = load_manual_weights(io.StringIO("Heart rate,2.0\n"))
        assert fw.values[HR] == 2.0
        assert fw.values.sum() == 2.0
        assert "39 variables" in caplog.text

    def test_negative_weight(self):
        with pytest.raises(NegativeWeight):
            load_manual_weights(io.StringIO("Heart rate,-1\n"))

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariable):
            load_manual_weights(io.StringIO("Pulse,1.0\n"))

    def test_malformed(self):
        with pytest.raises(MalformedRow):
            load_manual_weights(io.StringIO("Heart rate,abc\n"))

    def test_save_load_roundtrip(self, tmp_path, rng):
        fw = FeatureWeights(rng.random(vocab.N_VARIABLES))
        path = tmp_path / "w.csv"
        save_weights(fw, path)
        back = load_manual_weights(path)
        np.testing.assert_array_equal(back.values, fw.values)
        lines = path.read_text().splitlines()
        assert lines[0] == "variable,weight"
        assert [l.rpartition(",")[0] for l in lines[1:]] == list(vocab.ALL_VARIABLES)
