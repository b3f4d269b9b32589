import math

import numpy as np
import pytest

from protofuse.autodiff import zero_norm_events
from protofuse.errors import InvalidArgumentError
from protofuse.ops import cosine_similarity, kl_divergence, softmax

from oracles import cosine_oracle, kl_oracle, softmax_oracle


class TestSoftmax:
    def test_symmetric_inputs_uniform(self):
        np.testing.assert_allclose(softmax([1, 1, 1]), [1 / 3, 1 / 3, 1 / 3])

    def test_two_logit_value(self):
        expected = math.exp(2) / (math.exp(2) + 1)  # 0.880797...
        out = softmax([2, 0])
        assert abs(out[0] - expected) < 1e-12
        assert abs(out[0] - 0.880797) < 1e-6

    def test_shift_invariance_exact_for_integer_shifts(self):
        base = softmax([5.0, 3.0, 7.0])
        for c in (-3.0, 2.0, 100.0):
            np.testing.assert_array_equal(softmax([5.0 + c, 3.0 + c, 7.0 + c]), base)

    def test_normalization_and_positivity_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = rng.integers(1, 8)
            logits = rng.normal(scale=10.0, size=n)
            tau = float(rng.uniform(0.05, 20.0))
            p = softmax(logits, tau)
            assert np.all(p > 0.0) and np.all(p < 1.0 + 1e-12)
            assert abs(p.sum() - 1.0) < 1e-6

    def test_joint_scaling_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            logits = rng.normal(size=4)
            tau = float(rng.uniform(0.1, 5.0))
            c = 2.0 ** rng.integers(-3, 6)  # power-of-two scaling is float-exact
            np.testing.assert_array_equal(softmax(logits * c, tau * c), softmax(logits, tau))

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            logits = rng.normal(scale=5.0, size=5)
            np.testing.assert_allclose(
                softmax(logits, 0.7), softmax_oracle(logits, 0.7), atol=1e-12
            )

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            softmax([1.0, np.inf])
        with pytest.raises(InvalidArgumentError):
            softmax([1.0, 2.0], temperature=0.0)
        with pytest.raises(InvalidArgumentError):
            softmax([])


class TestCosineSimilarity:
    def test_identical_direction(self):
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        assert abs(cosine_similarity([1, 1], [1, 0]) - 1 / math.sqrt(2)) < 1e-12
        assert abs(cosine_similarity([1, 1], [1, 0]) - 0.707107) < 1e-6

    def test_scale_invariance_power_of_two_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            c = 2.0 ** rng.integers(-8, 9)
            assert cosine_similarity(a * c, b) == cosine_similarity(a, b)
            assert cosine_similarity(a, b * c) == cosine_similarity(a, b)

    def test_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            a, b = rng.normal(size=5), rng.normal(size=5)
            assert abs(cosine_similarity(a, b)) <= 1.0 + 1e-9

    def test_zero_norm_returns_zero_and_counts(self):
        zero_norm_events.reset()
        assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) == 0.0
        assert zero_norm_events.count == 1

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            a, b = rng.normal(size=7), rng.normal(size=7)
            assert abs(cosine_similarity(a, b) - cosine_oracle(a, b)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            cosine_similarity([1, 2], [1, 2, 3])


class TestKLDivergence:
    def test_identical_is_zero(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_one_hot_vs_uniform(self):
        assert abs(kl_divergence([1, 0], [0.5, 0.5]) - math.log(2)) < 1e-12
        assert abs(kl_divergence([1, 0], [0.5, 0.5]) - 0.693147) < 1e-6

    def test_hand_value(self):
        expected = 0.5 * math.log(0.5 / 0.8) + 0.5 * math.log(0.5 / 0.2)
        assert abs(kl_divergence([0.5, 0.5], [0.8, 0.2]) - expected) < 1e-12
        assert abs(expected - 0.223144) < 1e-6

    def test_nonnegative_randomized(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            n = int(rng.integers(2, 8))
            p = rng.dirichlet(np.ones(n))
            q = rng.dirichlet(np.ones(n))
            assert kl_divergence(p, q) >= -1e-9
            assert kl_divergence(p, p) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = rng.dirichlet(np.ones(5))
            q = rng.dirichlet(np.ones(5))
            assert abs(kl_divergence(p, q) - kl_oracle(p, q)) < 1e-12

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            kl_divergence([0.5, 0.5], [0.5, 0.5, 0.0])
        with pytest.raises(InvalidArgumentError):
            kl_divergence([0.9, 0.2], [0.5, 0.5])  # sums to 1.1
        with pytest.raises(InvalidArgumentError):
            kl_divergence([-0.1, 1.1], [0.5, 0.5])
