import numpy as np
import pytest

from eegid.evaluate import (
    EvaluationError,
    confusion_and_report,
    full_report,
    inter_subject_correlation,
    pearson,
    roc_auc,
    roc_points_csv,
)
from eegid.signal import Band, Recording, zscore_normalize


def pair_counting_auc(truth, scores_k, k):
    """AUC oracle: P(score_pos > score_neg) + 0.5*P(equal) over all pairs."""
    pos = scores_k[truth == k]
    neg = scores_k[truth != k]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestConfusionAndReport:
    def test_perfect_prediction(self):
        truth = np.array([0, 1, 2, 0, 1, 2])
        report = confusion_and_report(truth, truth, 3)
        assert report.accuracy == 1.0
        assert np.all(report.f1 == 1.0)
        assert np.array_equal(report.confusion, np.eye(3, dtype=int) * 2)

    def test_hand_counted_case(self):
        report = confusion_and_report([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert report.precision[1] == pytest.approx(2 / 3, abs=1e-12)
        assert report.recall[1] == 1.0
        assert report.f1[1] == pytest.approx(0.8, abs=1e-12)
        assert report.accuracy == 0.75

    def test_all_one_class_on_balanced_data(self):
        report = confusion_and_report([0, 0, 1, 1], [0, 0, 0, 0], 2)
        assert report.accuracy == 0.5
        assert report.precision[1] == 0.0  # empty prediction column -> 0
        assert report.recall[1] == 0.0
        assert report.f1[1] == 0.0

    def test_support_and_trace_identities(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 4, size=200)
        pred = rng.integers(0, 4, size=200)
        report = confusion_and_report(truth, pred, 4)
        assert report.support.sum() == report.confusion.sum() == 200
        assert report.accuracy == np.trace(report.confusion) / 200

    def test_f1_is_harmonic_mean(self):
        rng = np.random.default_rng(1)
        truth = rng.integers(0, 5, size=300)
        pred = rng.integers(0, 5, size=300)
        report = confusion_and_report(truth, pred, 5)
        for k in range(5):
            p, r = report.precision[k], report.recall[k]
            expect = 0.0 if p + r == 0 else 2 * p * r / (p + r)
            assert report.f1[k] == pytest.approx(expect, abs=1e-12)

    def test_empty_input_rejected(self):
        with pytest.raises(EvaluationError):
            confusion_and_report([], [], 2)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(EvaluationError):
            confusion_and_report([0, 1], [0], 2)


class TestRocAuc:
    def test_perfect_separation(self):
        truth = np.array([0, 0, 1, 1])
        scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.2, 0.8]])
        _, aucs, macro = roc_auc(truth, scores)
        assert aucs == [1.0, 1.0]
        assert macro == 1.0

    def test_uninformative_scores(self):
        truth = np.array([0, 1, 0, 1])
        scores = np.full((4, 2), 0.5)
        curves, aucs, _ = roc_auc(truth, scores)
        assert aucs == [0.5, 0.5]
        # all ties collapse into a single threshold step
        assert np.array_equal(curves[0], [[0.0, 0.0], [1.0, 1.0]])

    def test_four_point_toy_matches_pair_counting(self):
        truth = np.array([1, 0, 1, 0])
        scores = np.array([[0.2, 0.8], [0.6, 0.4], [0.4, 0.6], [0.5, 0.5]])
        _, aucs, _ = roc_auc(truth, scores)
        for k in range(2):
            assert aucs[k] == pytest.approx(pair_counting_auc(truth, scores[:, k], k), abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances_match_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 201))
        k = int(rng.integers(2, 5))
        truth = rng.integers(0, k, size=n)
        scores = rng.uniform(size=(n, k))
        if seed % 2 == 0:  # force ties
            scores = np.round(scores, 1)
        _, aucs, _ = roc_auc(truth, scores)
        for cls in range(k):
            want = pair_counting_auc(truth, scores[:, cls], cls)
            if want is None:
                assert aucs[cls] is None
            else:
                assert aucs[cls] == pytest.approx(want, abs=1e-9)

    def test_absent_class_reports_none(self):
        truth = np.array([0, 0, 1, 1])
        scores = np.random.default_rng(3).uniform(size=(4, 3))
        curves, aucs, macro = roc_auc(truth, scores)
        assert aucs[2] is None
        assert macro == pytest.approx(np.mean([aucs[0], aucs[1]]))
        assert np.array_equal(curves[2], [[0.0, 0.0], [1.0, 1.0]])

    def test_curves_start_and_end_properly(self):
        rng = np.random.default_rng(4)
        truth = rng.integers(0, 3, size=60)
        scores = rng.uniform(size=(60, 3))
        curves, _, _ = roc_auc(truth, scores)
        for pts in curves:
            assert np.array_equal(pts[0], [0.0, 0.0])
            assert np.array_equal(pts[-1], [1.0, 1.0])

    def test_csv_rendering(self):
        truth = np.array([0, 1])
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        report = full_report(truth, np.array([0, 1]), scores, 2)
        csv = roc_points_csv(report)
        lines = csv.strip().split("\n")
        assert lines[0] == "class,fpr,tpr"
        assert all(len(line.split(",")) == 3 for line in lines[1:])


class TestPearson:
    def test_identity(self):
        x = np.array([1.0, 2.0, 5.0, 7.0])
        assert pearson(x, x) == 1.0

    def test_negation(self):
        x = np.array([1.0, 2.0, 5.0, 7.0])
        assert pearson(x, -x) == -1.0

    def test_hand_computed(self):
        # r = 1 / (sqrt(2/3)*sqrt(14/9)) = 0.9819805060619659
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.9819805060619659, abs=1e-12)

    def test_constant_input_signaled(self):
        with pytest.raises(EvaluationError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(EvaluationError):
            pearson([1.0], [2.0])


def preprocessed(samples, rate=128.0, subject=0, trial=0):
    return zscore_normalize(Recording(samples, rate, subject=subject, trial=trial))


class TestInterSubjectCorrelation:
    def _bands(self, rate=128.0):
        return [Band.named(name, rate) for name in ("delta", "theta", "alpha", "beta", "gamma", "full")]

    def test_identical_recordings_give_unity(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(1024, 3))
        recs = {0: [preprocessed(samples, subject=0)], 1: [preprocessed(samples, subject=1)]}
        table = inter_subject_correlation(recs, self._bands(), window_len=128, pairs=20, seed=1)
        assert np.allclose(table.mean_abs_r, 1.0, atol=1e-9)

    def test_white_noise_null_matches_simulation_oracle(self):
        """Independent subjects: measured per-band means must sit inside the
        null distribution computed by a direct window-pair simulation."""
        rng = np.random.default_rng(7)
        n, channels, rate, window = 4096, 2, 128.0, 128
        recs = {sid: [preprocessed(rng.normal(size=(n, channels)), subject=sid)]
                for sid in range(3)}
        bands = self._bands(rate)
        table = inter_subject_correlation(recs, bands, window_len=window, pairs=150, seed=3)

        # oracle: fresh independent noise, aligned windows, direct |pearson|
        sim_rng = np.random.default_rng(1234)
        for b, band in enumerate(bands):
            draws = []
            x = preprocessed(sim_rng.normal(size=(n, 1)))
            y = preprocessed(sim_rng.normal(size=(n, 1)))
            from eegid.signal import decompose

            xb, yb = decompose(x, band), decompose(y, band)
            for _ in range(400):
                start = sim_rng.integers(n - window + 1)
                wa = xb.samples[start:start + window, 0]
                wb = yb.samples[start:start + window, 0]
                draws.append(abs(pearson(wa, wb)))
            null_mean = np.mean(draws)
            null_sem = np.std(draws) / np.sqrt(150)
            assert abs(table.average[b] - null_mean) < 6 * null_sem + 0.02, band.name

    def test_deterministic_and_bounded(self):
        rng = np.random.default_rng(11)
        recs = {sid: [preprocessed(rng.normal(size=(512, 2)), subject=sid)] for sid in range(3)}
        bands = [Band.named("delta", 128.0), Band.named("full", 128.0)]
        t1 = inter_subject_correlation(recs, bands, window_len=64, pairs=25, seed=9)
        t2 = inter_subject_correlation(recs, bands, window_len=64, pairs=25, seed=9)
        assert np.array_equal(t1.mean_abs_r, t2.mean_abs_r)
        assert np.all((t1.mean_abs_r >= 0.0) & (t1.mean_abs_r <= 1.0))
        assert np.allclose(t1.average, t1.mean_abs_r.mean(axis=1))
        assert np.allclose(t1.std, t1.mean_abs_r.std(axis=1))

    def test_window_longer_than_recording_rejected(self):
        rng = np.random.default_rng(2)
        recs = {sid: [preprocessed(rng.normal(size=(100, 2)), subject=sid)] for sid in range(2)}
        with pytest.raises(EvaluationError):
            inter_subject_correlation(recs, [Band.named("full", 128.0)], window_len=200, pairs=5)

    def test_single_subject_rejected(self):
        rng = np.random.default_rng(2)
        recs = {0: [preprocessed(rng.normal(size=(256, 2)))]}
        with pytest.raises(EvaluationError):
            inter_subject_correlation(recs, [Band.named("full", 128.0)], window_len=64, pairs=5)

    def test_text_table_shape(self):
        rng = np.random.default_rng(5)
        recs = {sid: [preprocessed(rng.normal(size=(512, 2)), subject=sid)] for sid in range(3)}
        table = inter_subject_correlation(recs, self._bands(), window_len=64, pairs=10, seed=2)
        text = table.format_text()
        lines = text.strip().split("\n")
        assert len(lines) == 1 + 6  # header + six bands
        assert "average" in lines[0]
