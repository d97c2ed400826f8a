"""Tests for accuracy, flip probability, cosine similarity and histograms."""

import numpy as np
import pytest

from src.lowpass.activations import af_init
from src.lowpass.corruptions import PerturbationSequence
from src.lowpass.errors import MetricError
from src.lowpass.layers import build_network
from src.lowpass.metrics import (
    accuracy_by_severity, activation_histogram, collect_features, cosine_similarity, feature_shift,
    flip_probability, flip_rate, top1,
)
from src.lowpass.synthetic import make_synthetic


@pytest.fixture(scope="module")
def split():
    return make_synthetic(per_class=2, seed=2).train


@pytest.fixture(scope="module")
def network():
    return build_network("mlp", af_init("relu"), in_shape=(1, 28, 28), seed=1)


@pytest.fixture
def mean():
    return np.zeros(1)


def sequence(kind, brightness):
    frames = np.stack([np.full((1, 2, 2), b) for b in brightness])
    return PerturbationSequence(frames, kind, np.arange(len(brightness), dtype=float))


def threshold_classifier(frames):
    return (frames.mean(axis=(1, 2, 3)) > 0.5).astype(int)


class TestTop1:

    def test_all_right(self):
        assert top1(np.array([[2.0, 1.0], [0.0, 3.0]]), np.array([0, 1])) == 1.0

    def test_all_wrong(self):
        assert top1(np.array([[2.0, 1.0], [0.0, 3.0]]), np.array([1, 0])) == 0.0

    def test_chance_level(self):
        rng = np.random.default_rng(0)
        acc = top1(rng.standard_normal((100_000, 10)), rng.integers(0, 10, 100_000))
        assert acc == pytest.approx(0.1, abs=0.01)

    def test_empty(self):
        with pytest.raises(MetricError, match="empty"):
            top1(np.zeros((0, 10)), np.zeros(0))

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            top1(np.zeros((3, 10)), np.zeros(2))


class TestFlipProbability:

    def test_one_flip_each_way(self):
        assert flip_rate(np.array([[1, 2, 1]])) == 1.0

    def test_no_flips(self):
        assert flip_rate(np.array([[1, 1, 1], [4, 4, 4]])) == 0.0

    def test_denominator_counts_transitions(self):
        assert flip_rate(np.array([[0, 1, 1, 1], [2, 2, 2, 2]])) == pytest.approx(1 / 6)

    def test_constant_classifier(self):
        seqs = [sequence("gaussian_noise", [0.1, 0.9, 0.1]), sequence("zoom_blur", [0.2, 0.3])]
        report = flip_probability(seqs, lambda frames: np.zeros(len(frames), dtype=int))
        assert report.mfp == 0.0
        assert sorted(report.per_kind) == ["gaussian_noise", "zoom_blur"]

    def test_mean_over_kinds(self):
        seqs = [sequence("gaussian_noise", [0.1, 0.9, 0.1]), sequence("zoom_blur", [0.2, 0.3, 0.4])]
        report = flip_probability(seqs, threshold_classifier)
        assert report.per_kind == {"gaussian_noise": 1.0, "zoom_blur": 0.0}
        assert report.mfp == 0.5

    def test_relabelling_invariant(self):
        seqs = [sequence("gaussian_noise", [0.1, 0.9, 0.9, 0.2])]
        plain = flip_probability(seqs, threshold_classifier)
        relabelled = flip_probability(seqs, lambda f: 7 - 3 * threshold_classifier(f))
        assert plain.per_kind == relabelled.per_kind

    def test_short_sequence(self):
        with pytest.raises(MetricError, match="at least 2 frames"):
            flip_probability([sequence("gaussian_noise", [0.5])], threshold_classifier)

    def test_mixed_lengths(self):
        seqs = [sequence("gaussian_noise", [0.1, 0.2]), sequence("gaussian_noise", [0.1, 0.2, 0.3])]
        with pytest.raises(MetricError, match="different frame counts"):
            flip_probability(seqs, threshold_classifier)


class TestCosineSimilarity:

    def test_identical_is_exactly_one(self):
        a = np.random.default_rng(3).standard_normal((5, 7))
        assert np.array_equal(cosine_similarity(a, a.copy()), np.ones(5))

    def test_orthogonal(self):
        assert cosine_similarity(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]]))[0] == 0.0

    def test_zero_rows(self):
        zeros, ones = np.zeros((1, 3)), np.ones((1, 3))
        assert cosine_similarity(zeros, zeros)[0] == 1.0
        assert cosine_similarity(zeros, ones)[0] == 0.0

    def test_scale_invariant(self):
        a = np.random.default_rng(4).standard_normal((4, 6))
        assert np.allclose(cosine_similarity(a, 3.5 * a), 1.0)


class TestFeatureShift:

    def test_clean_level_is_one(self, network, mean, split):
        clean = split.images[:6]
        noisy = np.clip(clean + np.random.default_rng(0).normal(0, 0.3, clean.shape), 0, 1)
        report = feature_shift(network, mean, clean, [clean.copy(), noisy])
        assert report.per_severity[1] == 1.0
        assert report.per_severity[2] == 1.0
        assert report.per_severity[3] < 1.0
        assert sorted(report.per_severity) == [1, 2, 3]

    def test_depth_groups(self, network, mean, split):
        clean = split.images[:4]
        report = feature_shift(network, mean, clean, [1.0 - clean])
        taps = len(collect_features(network, clean, mean))
        assert len(report.per_depth) == min(taps, 4)

    def test_concat_mode(self, network, mean, split):
        clean = split.images[:4]
        report = feature_shift(network, mean, clean, [clean], mode="concat")
        assert report.mode == "concat"
        assert report.per_severity[2] == 1.0

    def test_count_mismatch(self, network, mean, split):
        with pytest.raises(MetricError, match="Severity 1 has 3 images"):
            feature_shift(network, mean, split.images[:4], [split.images[:3]])

    def test_unknown_mode(self, network, mean, split):
        with pytest.raises(MetricError, match="mode"):
            feature_shift(network, mean, split.images[:2], [split.images[:2]], mode="mean")


class TestHistogram:

    def test_zero_input_lands_in_first_bin(self, mean):
        network = build_network("cnn3", af_init("relu"), in_shape=(1, 16, 16))
        images = np.zeros((3, 1, 16, 16))
        counts, edges, magnitude = activation_histogram(network, mean, images, bins=10)
        assert counts[0] > 0
        assert np.all(counts[1:] == 0)
        assert edges[0] == 0.0 and len(edges) == 11
        assert magnitude == 0.0

    def test_shared_edges(self, network, mean, split):
        _, edges, _ = activation_histogram(network, mean, split.images[:5], bins=8)
        counts, same, _ = activation_histogram(network, mean, 1.0 - split.images[:5], edges=edges)
        assert np.array_equal(edges, same)
        assert counts.sum() == pytest.approx(
            np.mean([v.size for v in collect_features(network, split.images[:5], mean)[:-1]]))


class TestAccuracyBySeverity:

    def test_rows(self, network, mean, split):
        rows = accuracy_by_severity(network, mean, split.images[:8], split.labels[:8],
                                    ["brightness", "contrast"], [1, 5])
        assert rows[0][:2] == ["clean", 0]
        assert [r[:2] for r in rows[1:]] == [["brightness", 1], ["brightness", 5],
                                             ["contrast", 1], ["contrast", 5]]
        assert all(0.0 <= r[2] <= 1.0 for r in rows)
