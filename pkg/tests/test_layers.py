import numpy as np
import pytest
from conftest import central_difference, rel_error

from ladderemo import layers as L
from ladderemo.errors import ArgumentError, StateError
from ladderemo.numerics import make_rng


def bn_params(units, rng=None, eps=L.BN_EPSILON):
    p = L.BatchNormParams.fresh(units)
    p.epsilon = eps
    if rng is not None:
        p.gamma[...] = rng.uniform(0.5, 1.5, units)
        p.beta[...] = rng.standard_normal(units)
        p.running_mean[...] = rng.standard_normal(units)
        p.running_var[...] = rng.uniform(0.5, 2.0, units)
    return p


def check_layer(forward, x, params, rng):
    """Compare layer_backward against central differences of sum(y * proj)."""
    y, cache = forward()
    proj = rng.standard_normal(y.shape)
    dx, grads = L.layer_backward(proj, cache)
    loss = lambda: float(np.sum(forward()[0] * proj))
    assert rel_error(dx, central_difference(loss, x)) < 1e-6
    for name, arr in params.items():
        assert rel_error(grads[name], central_difference(loss, arr)) < 1e-6, name


class TestDense:
    def test_identity(self, rng):
        x = rng.standard_normal((3, 4))
        y, cache = L.dense_forward(x, L.DenseParams(np.eye(4), np.zeros(4)))
        np.testing.assert_array_equal(y, x)
        g = rng.standard_normal((3, 4))
        dx, _ = L.layer_backward(g, cache)
        np.testing.assert_array_equal(dx, g)

    def test_hand_example(self):
        y, _ = L.dense_forward(np.array([[1.0, 1.0]]), L.DenseParams(np.array([[1.0], [2.0]]), np.array([3.0])))
        np.testing.assert_array_equal(y, [[6.0]])

    def test_gradients(self, rng):
        x = rng.standard_normal((3, 4))
        p = L.DenseParams(rng.standard_normal((4, 2)), rng.standard_normal(2))
        check_layer(lambda: L.dense_forward(x, p), x, {"W": p.W, "b": p.b}, rng)


class TestBatchNorm:
    def test_constant_column(self):
        x = np.full((6, 1), 3.7)
        y, _ = L.batchnorm_forward(x, bn_params(1), L.TRAIN)
        assert np.all(np.abs(y) <= 1e-3)

    def test_standardized_fixed_point(self, rng):
        x = rng.standard_normal((50, 3))
        x = (x - x.mean(0)) / x.std(0)
        y, _ = L.batchnorm_forward(x, bn_params(3), L.TRAIN)
        np.testing.assert_allclose(y, x, atol=1e-3)

    def test_hand_example(self):
        p = bn_params(1, eps=1e-12)
        p.gamma[...] = 2.0
        p.beta[...] = 1.0
        y, _ = L.batchnorm_forward(np.array([[1.0], [3.0]]), p, L.TRAIN)
        np.testing.assert_allclose(y, [[-1.0], [3.0]], atol=1e-9)

    def test_batch_of_one_rejected(self):
        with pytest.raises(ArgumentError):
            L.batchnorm_forward(np.ones((1, 2)), bn_params(2), L.TRAIN)

    def test_output_moments(self, rng):
        p = bn_params(4, rng)
        y, _ = L.batchnorm_forward(rng.standard_normal((64, 4)) * 3 + 1, p, L.TRAIN, update_stats=False)
        np.testing.assert_allclose(y.mean(0), p.beta, atol=1e-6)
        np.testing.assert_allclose(y.std(0), np.abs(p.gamma), rtol=1e-4)

    def test_running_stats_update(self, rng):
        p = bn_params(2)
        x = rng.standard_normal((10, 2))
        L.batchnorm_forward(x, p, L.TRAIN)
        np.testing.assert_allclose(p.running_mean, 0.01 * x.mean(0))
        np.testing.assert_allclose(p.running_var, 0.99 + 0.01 * x.var(0))

    def test_infer_uses_running_stats(self, rng):
        p = bn_params(3, rng)
        x = rng.standard_normal((5, 3))
        y, _ = L.batchnorm_forward(x, p, L.INFER)
        expected = p.gamma * (x - p.running_mean) / np.sqrt(p.running_var + p.epsilon) + p.beta
        np.testing.assert_allclose(y, expected, rtol=1e-14)

    @pytest.mark.parametrize("mode", [L.TRAIN, L.INFER])
    @pytest.mark.parametrize("affine", [True, False])
    def test_gradients(self, rng, mode, affine):
        x = rng.standard_normal((5, 3))
        p = bn_params(3, rng)
        params = {"gamma": p.gamma, "beta": p.beta} if affine else {}
        check_layer(lambda: L.batchnorm_forward(x, p, mode, affine=affine, update_stats=False), x, params, rng)


class TestActivationsAndDropout:
    def test_relu(self):
        y, cache = L.relu_forward(np.array([[-1.0, 2.0]]))
        np.testing.assert_array_equal(y, [[0.0, 2.0]])
        dx, _ = L.layer_backward(np.array([[5.0, 5.0]]), cache)
        np.testing.assert_array_equal(dx, [[0.0, 5.0]])

    def test_relu_derivative_at_zero(self):
        _, cache = L.relu_forward(np.array([[0.0]]))
        dx, _ = L.layer_backward(np.array([[1.0]]), cache)
        assert dx[0, 0] == 0.0

    def test_relu_and_leaky_gradients(self, rng):
        x = rng.standard_normal((4, 3))
        check_layer(lambda: L.relu_forward(x), x, {}, rng)
        check_layer(lambda: L.leaky_relu_forward(x), x, {}, rng)

    def test_scale_shift_gradients(self, rng):
        x = rng.standard_normal((4, 3))
        gamma, beta = rng.standard_normal(3), rng.standard_normal(3)
        check_layer(lambda: L.scale_shift_forward(x, gamma, beta), x, {"gamma": gamma, "beta": beta}, rng)

    @pytest.mark.parametrize("mode", [L.TRAIN, L.INFER])
    def test_dropout_zero_probability(self, rng, mode):
        x = rng.standard_normal((3, 4))
        y, _ = L.dropout_forward(x, 0.0, make_rng(0), mode)
        np.testing.assert_array_equal(y, x)

    def test_dropout_infer_identity(self, rng):
        x = rng.standard_normal((3, 4))
        y, _ = L.dropout_forward(x, 0.5, make_rng(0), L.INFER)
        np.testing.assert_array_equal(y, x)

    def test_dropout_statistics(self):
        x = np.abs(make_rng(1).standard_normal((1, 100_000))) + 1.0
        y, cache = L.dropout_forward(x, 0.5, make_rng(2), L.TRAIN)
        kept = np.mean(cache.data["mask"] > 0)
        assert abs(kept - 0.5) < 0.01
        assert abs(y.mean() / x.mean() - 1.0) < 0.02

    def test_dropout_gradient_and_determinism(self, rng):
        x = rng.standard_normal((4, 5))
        check_layer(lambda: L.dropout_forward(x, 0.3, make_rng(9), L.TRAIN), x, {}, rng)

    def test_dropout_rejects_p_one(self):
        with pytest.raises(ArgumentError):
            L.dropout_forward(np.ones((2, 2)), 1.0, make_rng(0), L.TRAIN)

    def test_noise_infer_identity_and_train_grad(self, rng):
        x = rng.standard_normal((3, 3))
        y, _ = L.noise_forward(x, 0.3, make_rng(0), L.INFER)
        np.testing.assert_array_equal(y, x)
        check_layer(lambda: L.noise_forward(x, 0.3, make_rng(4), L.TRAIN), x, {}, rng)


class TestCacheContract:
    def test_cache_consumed_once(self, rng):
        _, cache = L.relu_forward(rng.standard_normal((2, 2)))
        L.layer_backward(np.ones((2, 2)), cache)
        with pytest.raises(StateError):
            L.layer_backward(np.ones((2, 2)), cache)

    def test_rejects_foreign_cache(self):
        with pytest.raises(StateError):
            L.layer_backward(np.ones((2, 2)), {"kind": "relu"})
