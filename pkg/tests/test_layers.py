import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_diff, rel_error
from rawbci.exceptions import CallOrderError, ShapeError
from rawbci.layers import BatchNorm, Dense, LeakyReLU, SoftmaxCrossEntropy


def weighted_sum_loss(weights):
    """Scalar loss sum(out * weights) whose upstream gradient is ``weights``."""
    return lambda out: float(np.sum(out * weights))


class TestDense:
    def test_identity_map(self, rng):
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(Dense(np.eye(4)).forward(x), x)

    def test_ones_weights(self):
        x = np.array([[1.0, 2.0]])
        # hand: each output = 1*1 + 2*1
        np.testing.assert_array_equal(Dense(np.ones((2, 3))).forward(x), [[3.0, 3.0, 3.0]])

    def test_zero_input_gives_bias(self):
        b = np.array([[0.5, -1.0]])
        out = Dense(np.ones((3, 2)), b).forward(np.zeros((4, 3)))
        np.testing.assert_array_equal(out, np.repeat(b, 4, axis=0))

    def test_backward_example_against_finite_differences(self):
        layer = Dense(np.ones((2, 3)))
        x = np.array([[1.0, 2.0]])
        d_out = np.ones((1, 3))
        loss = weighted_sum_loss(d_out)
        num_W = central_diff(lambda: loss(layer.forward(x, training=False)), layer.W)
        num_b = central_diff(lambda: loss(layer.forward(x, training=False)), layer.b)
        layer.forward(x)
        layer.backward(d_out)
        np.testing.assert_allclose(num_W, [[1, 1, 1], [2, 2, 2]], atol=1e-9)
        np.testing.assert_allclose(layer.grad_W, num_W, atol=1e-9)
        np.testing.assert_allclose(layer.grad_b, num_b, atol=1e-9)
        np.testing.assert_array_equal(layer.grad_W, [[1, 1, 1], [2, 2, 2]])
        np.testing.assert_array_equal(layer.grad_b, [[1, 1, 1]])

    def test_zero_upstream(self, rng):
        layer = Dense(rng.standard_normal((3, 2)))
        layer.forward(rng.standard_normal((4, 3)))
        d_x = layer.backward(np.zeros((4, 2)))
        assert not d_x.any() and not layer.grad_W.any() and not layer.grad_b.any()

    def test_identity_jacobian(self, rng):
        layer = Dense(np.eye(3))
        layer.forward(rng.standard_normal((2, 3)))
        d = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(layer.backward(d), d)

    def test_random_gradient_check(self, rng):
        layer = Dense(rng.standard_normal((4, 3)), rng.standard_normal((1, 3)))
        x = rng.standard_normal((5, 4))
        w = rng.standard_normal((5, 3))
        loss = weighted_sum_loss(w)
        layer.forward(x)
        d_x = layer.backward(w)
        assert rel_error(d_x, central_diff(lambda: loss(layer.forward(x, training=False)), x)) < 1e-4
        assert rel_error(layer.grad_W, central_diff(lambda: loss(layer.forward(x, training=False)), layer.W)) < 1e-4

    def test_errors(self):
        layer = Dense(np.ones((2, 3)))
        with pytest.raises(ShapeError):
            layer.forward(np.ones((1, 3)))
        with pytest.raises(CallOrderError):
            layer.backward(np.ones((1, 3)))
        layer.forward(np.ones((1, 2)))
        layer.backward(np.ones((1, 3)))
        with pytest.raises(CallOrderError):
            layer.backward(np.ones((1, 3)))


class TestBatchNorm:
    def test_constant_column_centres_to_zero(self):
        out = BatchNorm(1).forward(np.full((3, 1), 5.0))
        np.testing.assert_array_equal(out, np.zeros((3, 1)))

    def test_two_point_closed_form(self):
        out = BatchNorm(1, epsilon=1e-5).forward(np.array([[-1.0], [1.0]]))
        # mean 0, population variance 1
        expected = 1.0 / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out[:, 0], [-expected, expected], rtol=1e-15)
        assert abs(expected - 0.999995) < 1e-6

    def test_zero_gamma_gives_beta(self, rng):
        bn = BatchNorm(3)
        bn.gamma[...] = 0.0
        bn.beta[...] = [[1.0, 2.0, 3.0]]
        out = bn.forward(rng.standard_normal((4, 3)) * 10)
        np.testing.assert_array_equal(out, np.repeat(bn.beta, 4, axis=0))

    def test_running_stats_update(self):
        bn = BatchNorm(1, momentum=0.1)
        bn.forward(np.array([[1.0], [3.0]]))
        np.testing.assert_allclose(bn.running_mean, [[0.9 * 0 + 0.1 * 2.0]])
        np.testing.assert_allclose(bn.running_var, [[0.9 * 1 + 0.1 * 1.0]])

    def test_training_output_statistics(self, rng):
        x = rng.standard_normal((32, 4)) * 3 + 7
        eps = 1e-5
        out = BatchNorm(4, epsilon=eps).forward(x)
        assert np.abs(out.mean(axis=0)).max() < 1e-10
        var = x.var(axis=0)
        np.testing.assert_allclose(out.var(axis=0), var / (var + eps), atol=1e-6)

    def test_inference_is_pure(self, rng):
        bn = BatchNorm(3)
        bn.forward(rng.standard_normal((5, 3)))
        before = (bn.running_mean.copy(), bn.running_var.copy())
        x = rng.standard_normal((4, 3))
        a = bn.forward(x, training=False)
        b = bn.forward(x, training=False)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(bn.running_mean, before[0])
        np.testing.assert_array_equal(bn.running_var, before[1])

    def test_zero_upstream(self, rng):
        bn = BatchNorm(3)
        bn.forward(rng.standard_normal((4, 3)))
        d_x = bn.backward(np.zeros((4, 3)))
        assert not d_x.any() and not bn.grad_gamma.any() and not bn.grad_beta.any()

    def test_gradients_against_finite_differences(self, rng):
        bn = BatchNorm(3)
        bn.gamma[...] = rng.standard_normal((1, 3))
        bn.beta[...] = rng.standard_normal((1, 3))
        x = rng.standard_normal((4, 3))
        w = rng.standard_normal((4, 3))
        loss = weighted_sum_loss(w)

        def f():
            # training-mode normalization without touching running stats
            probe = BatchNorm(3, bn.epsilon)
            probe.gamma, probe.beta = bn.gamma, bn.beta
            return loss(probe.forward(x))

        num_x = central_diff(f, x)
        num_gamma = central_diff(f, bn.gamma)
        num_beta = central_diff(f, bn.beta)
        bn.forward(x)
        d_x = bn.backward(w)
        assert rel_error(d_x, num_x) < 1e-4
        assert rel_error(bn.grad_gamma, num_gamma) < 1e-4
        assert rel_error(bn.grad_beta, num_beta) < 1e-4
        np.testing.assert_allclose(bn.grad_beta, w.sum(axis=0, keepdims=True), rtol=1e-14)

    def test_errors(self):
        bn = BatchNorm(2)
        with pytest.raises(ShapeError):
            bn.forward(np.ones((1, 2)))
        with pytest.raises(ShapeError):
            bn.forward(np.ones((3, 3)))
        with pytest.raises(CallOrderError):
            bn.backward(np.ones((3, 2)))
        bn.forward(np.ones((3, 2)), training=False)
        with pytest.raises(CallOrderError):
            bn.backward(np.ones((3, 2)))
        with pytest.raises(ValueError):
            BatchNorm(2, epsilon=0)

    @given(arrays(np.float64, (5, 2), elements=st.floats(-100, 100)))
    def test_running_var_nonnegative(self, x):
        bn = BatchNorm(2)
        bn.forward(x)
        assert (bn.running_var >= 0).all()


class TestLeakyReLU:
    def test_piecewise(self):
        out = LeakyReLU(0.01).forward(np.array([[-1.0, 2.0, 0.0]]))
        np.testing.assert_array_equal(out, [[-0.01, 2.0, 0.0]])

    def test_backward_negative_branch(self):
        layer = LeakyReLU(0.01)
        layer.forward(np.array([[-3.0]]))
        np.testing.assert_allclose(layer.backward(np.array([[10.0]])), [[0.1]], rtol=1e-15)

    def test_finite_differences_away_from_kink(self, rng):
        layer = LeakyReLU(0.01)
        x = rng.standard_normal((6, 5))
        x[np.abs(x) <= 1e-3] = 0.5
        w = rng.standard_normal((6, 5))
        loss = weighted_sum_loss(w)
        layer.forward(x)
        d_x = layer.backward(w)
        num = central_diff(lambda: loss(layer.forward(x, training=False)), x)
        assert rel_error(d_x, num) < 1e-4

    @given(arrays(np.float64, (3, 3), elements=st.floats(0, 1e6)))
    def test_idempotent_on_nonnegative(self, x):
        layer = LeakyReLU(0.2)
        once = layer.forward(x)
        np.testing.assert_array_equal(layer.forward(once), once)

    def test_slope_bounds(self):
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                LeakyReLU(bad)
        with pytest.raises(CallOrderError):
            LeakyReLU().backward(np.ones((1, 1)))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = SoftmaxCrossEntropy(5).forward(np.zeros((3, 5)), [0, 2, 4])
        assert abs(loss - math.log(5)) < 1e-15
        assert abs(loss - 1.6094379) < 1e-7

    def test_saturated_correct(self):
        loss = SoftmaxCrossEntropy(5).forward(np.array([[100.0, 0, 0, 0, 0]]), [0])
        assert 0 <= loss < 1e-9

    def test_two_class_closed_form(self):
        logits = np.array([[1.0, 2.0]])
        # true class 1: -log(e^2 / (e^1 + e^2)) = log(1 + e) - 1
        expected = math.log(1 + math.e) - 1
        assert abs(expected - 0.3132617) < 1e-7
        assert abs(SoftmaxCrossEntropy(2).forward(logits, [1]) - expected) < 1e-14
        # true class 0: -log(e^1 / (e^1 + e^2)) = log(1 + e)
        expected0 = math.log(1 + math.e)
        assert abs(SoftmaxCrossEntropy(2).forward(logits, [0]) - expected0) < 1e-14

    def test_no_overflow_on_large_logits(self):
        loss_layer = SoftmaxCrossEntropy(3)
        loss = loss_layer.forward(np.array([[1e4, -1e4, 5e3]]), [1])
        assert math.isfinite(loss)
        probs = loss_layer.cached_probabilities
        assert np.isfinite(probs).all()

    def test_backward_uniform(self):
        layer = SoftmaxCrossEntropy(5)
        logits = np.zeros((1, 5))
        layer.forward(logits, [2])
        grad = layer.backward([2])
        np.testing.assert_allclose(grad, [[0.2, 0.2, -0.8, 0.2, 0.2]], atol=1e-15)
        num = central_diff(lambda: SoftmaxCrossEntropy(5).forward(logits, [2], training=False), logits)
        np.testing.assert_allclose(grad, num, atol=1e-9)

    def test_backward_perfect_prediction(self):
        layer = SoftmaxCrossEntropy(3)
        layer.forward(np.array([[0.0, 800.0, 0.0]]), [1])
        assert np.abs(layer.backward()).max() == 0.0

    def test_gradient_rows_sum_to_zero_and_match_fd(self, rng):
        logits = rng.standard_normal((6, 4)) * 3
        labels = rng.integers(0, 4, 6)
        layer = SoftmaxCrossEntropy(4)
        layer.forward(logits, labels)
        probs = layer.cached_probabilities
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        grad = layer.backward(labels)
        assert np.abs(grad.sum(axis=1)).max() < 1e-12
        num = central_diff(lambda: SoftmaxCrossEntropy(4).forward(logits, labels, training=False), logits)
        assert rel_error(grad, num) < 1e-4

    @given(arrays(np.float64, (4, 3), elements=st.floats(-500, 500)), st.lists(st.integers(0, 2), min_size=4, max_size=4))
    def test_probability_rows_and_nonnegative_loss(self, logits, labels):
        layer = SoftmaxCrossEntropy(3)
        loss = layer.forward(logits, labels)
        p = layer.cached_probabilities
        assert loss >= 0
        assert np.all((p >= 0) & (p <= 1))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_errors(self):
        layer = SoftmaxCrossEntropy(3)
        with pytest.raises(ValueError, match="outside"):
            layer.forward(np.zeros((2, 3)), [0, 3])
        with pytest.raises(ValueError):
            layer.forward(np.zeros((2, 3)), [0, -1])
        with pytest.raises(CallOrderError):
            layer.backward([0, 1])
