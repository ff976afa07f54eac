import numpy as np
import pytest

from ladderemo.errors import ArgumentError, ShapeError
from ladderemo.numerics import gaussian_sample, hadamard, make_rng, matmul, spawn_rngs


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self, rng):
        a = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(matmul(np.eye(3), a), a)

    def test_hand_example(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])

    def test_against_triple_loop(self, rng):
        a = rng.standard_normal((5, 7))
        b = rng.standard_normal((7, 3))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self, rng):
        for _ in range(20):
            a, b, c = (rng.standard_normal(s) for s in [(4, 6), (6, 5), (5, 3)])
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.linalg.norm(left - right) <= 1e-9 * np.linalg.norm(left)


class TestHadamard:
    def test_ones_and_zeros(self, rng):
        a = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
        np.testing.assert_array_equal(hadamard(a, np.zeros_like(a)), np.zeros_like(a))

    def test_hand_example(self):
        np.testing.assert_array_equal(hadamard([[1, 2], [3, 4]], [[2, 2], [0, 1]]), [[2, 4], [0, 4]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hadamard(np.ones((2, 2)), np.ones((2, 3)))


class TestGaussianSample:
    def test_zero_variance(self):
        s = gaussian_sample(4, 5, 0.0, make_rng(0))
        assert np.all(s == 0)

    def test_negative_variance(self):
        with pytest.raises(ArgumentError):
            gaussian_sample(2, 2, -0.1, make_rng(0))

    def test_moments_at_noise_level(self):
        s = gaussian_sample(1000, 1000, 0.3, make_rng(7))
        assert abs(s.var() - 0.3) < 0.005
        assert abs(s.mean()) < 0.005

    def test_reset_reproduces(self):
        a = gaussian_sample(3, 4, 0.3, make_rng(5))
        b = gaussian_sample(3, 4, 0.3, make_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_stream_is_pinned(self):
        # PCG64 + ziggurat output for seed 0; guards against silent generator changes
        s = gaussian_sample(1, 3, 1.0, make_rng(0))
        np.testing.assert_array_equal(s, np.random.Generator(np.random.PCG64(0)).standard_normal((1, 3)))

    def test_spawned_streams_differ_and_repeat(self):
        a1, b1 = spawn_rngs(3, 2)
        a2, _ = spawn_rngs(3, 2)
        x = a1.standard_normal(5)
        assert not np.array_equal(x, b1.standard_normal(5))
        np.testing.assert_array_equal(x, a2.standard_normal(5))
