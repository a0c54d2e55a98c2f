"""Core tensor primitives against trivial cases and loop oracles."""

import mpmath
import numpy as np
import pytest

from llraw.errors import DimensionError, NumericError
from llraw.tensor import (
    conv2d,
    conv2d_backward,
    depthwise_conv2d,
    depthwise_conv2d_backward,
    finite_diff_grad,
    fully_connected,
    global_avg_pool,
    sgd_step,
    softmax,
    softmax_backward,
)

from reference import max_rel_err, naive_conv2d, naive_depthwise, naive_fc, naive_gap


class TestConv2d:
    def test_all_ones_sums_taps(self):
        y = conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))
        assert y.shape == (1, 1, 1)
        assert y[0, 0, 0] == 9.0

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 5, 7))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        assert np.array_equal(conv2d(x, w), x)

    def test_matches_loop_oracle_fixed_case(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        np.testing.assert_allclose(conv2d(x, w), naive_conv2d(x, w), atol=1e-12, rtol=0)

    def test_matches_loop_oracle_randomized_shapes(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            ci = int(rng.integers(1, 5))
            co = int(rng.integers(1, 5))
            kh = int(rng.integers(1, 4))
            kw = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 2))
            h = int(rng.integers(kh, kh + 6))
            w_ = int(rng.integers(kw, kw + 6))
            x = rng.normal(size=(ci, h, w_))
            w = rng.normal(size=(co, ci, kh, kw))
            got = conv2d(x, w, stride=stride, padding=padding)
            want = naive_conv2d(x, w, stride=stride, padding=padding)
            np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_channel_mismatch_names_axis(self):
        with pytest.raises(DimensionError, match="axis 0"):
            conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError, match="axis H"):
            conv2d(np.ones((1, 2, 5)), np.ones((1, 1, 3, 3)))


class TestDepthwise:
    def test_one_hot_center_is_identity(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6, 6))
        kern = np.zeros((4, 3, 3))
        kern[:, 1, 1] = 1.0
        np.testing.assert_allclose(
            depthwise_conv2d(x, kern, padding=1), x, atol=1e-15, rtol=0
        )

    def test_uniform_kernel_on_constant(self):
        x = np.full((2, 5, 5), 5.0)
        kern = np.full((2, 3, 3), 1.0 / 9.0)
        y = depthwise_conv2d(x, kern)
        np.testing.assert_allclose(y, 5.0, atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            c = int(rng.integers(1, 5))
            k = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 2))
            h = int(rng.integers(k, k + 6))
            w = int(rng.integers(k, k + 6))
            x = rng.normal(size=(c, h, w))
            kern = rng.normal(size=(c, k, k))
            got = depthwise_conv2d(x, kern, stride=stride, padding=padding)
            want = naive_depthwise(x, kern, stride=stride, padding=padding)
            np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError, match="axis 0"):
            depthwise_conv2d(np.ones((2, 4, 4)), np.ones((3, 3, 3)))


class TestGlobalAvgPool:
    def test_constant(self):
        assert np.allclose(global_avg_pool(np.full((2, 4, 4), 3.0)), 3.0)

    def test_small_case(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert global_avg_pool(x)[0] == pytest.approx(2.5)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 7, 6))
        np.testing.assert_allclose(global_avg_pool(x), naive_gap(x), atol=1e-12, rtol=0)

    def test_empty_spatial_extent(self):
        with pytest.raises(DimensionError):
            global_avg_pool(np.ones((2, 0, 4)))


class TestSoftmax:
    def test_equal_logits(self):
        y = softmax(np.zeros(9))
        np.testing.assert_allclose(y, 1.0 / 9.0, atol=1e-15)

    def test_closed_form(self):
        y = softmax(np.array([0.0, np.log(3.0)]))
        np.testing.assert_allclose(y, [0.25, 0.75], atol=1e-14)

    def test_overflow_safety_vs_arbitrary_precision(self):
        logits = np.array([1000.0, 999.0, 0.0, -500.0, 998.5])
        y = softmax(logits)
        assert np.isfinite(y).all()
        assert abs(y.sum() - 1.0) < 1e-12
        with mpmath.workdps(60):
            exps = [mpmath.exp(mpmath.mpf(v)) for v in logits]
            total = mpmath.fsum(exps)
            want = np.array([float(e / total) for e in exps])
        np.testing.assert_allclose(y, want, atol=1e-15, rtol=1e-12)

    def test_positive_and_normalized_on_random_axes(self):
        rng = np.random.default_rng(6)
        v = rng.normal(scale=100.0, size=(4, 5, 9))
        for axis in range(3):
            y = softmax(v, axis=axis)
            assert (y > 0).all()
            np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-12)


class TestFullyConnected:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        y = fully_connected(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(y, x)

    def test_small_case(self):
        y = fully_connected(np.array([2.0, 3.0]), np.array([[1.0, 1.0]]), np.array([1.0]))
        assert y[0] == 6.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=6)
        w = rng.normal(size=(4, 6))
        b = rng.normal(size=4)
        np.testing.assert_allclose(
            fully_connected(x, w, b), naive_fc(x, w, b), atol=1e-12, rtol=0
        )

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError, match="axis 1"):
            fully_connected(np.ones(3), np.ones((2, 4)), np.ones(2))


class TestFiniteDiff:
    def test_sum_of_squares(self):
        g = finite_diff_grad(lambda v: float(np.sum(v * v)), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)

    def test_constant_function(self):
        g = finite_diff_grad(lambda v: 1.5, np.array([0.3, -0.4, 2.0]))
        np.testing.assert_array_equal(g, 0.0)

    def test_non_finite_raises(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda v: float("nan"), np.array([1.0]))


class TestSgd:
    def test_zero_lr(self):
        p = [np.array([1.0, 2.0])]
        out = sgd_step(p, [np.array([5.0, 5.0])], 0.0)
        np.testing.assert_array_equal(out[0], p[0])

    def test_simple_step(self):
        out = sgd_step([np.array([1.0])], [np.array([2.0])], 0.5)
        np.testing.assert_array_equal(out[0], [0.0])

    def test_decreases_quadratic_loss(self):
        p = np.array([3.0, -2.0])
        loss = lambda v: float(np.sum(v * v))
        (p2,) = sgd_step([p], [2.0 * p], 0.1)
        assert loss(p2) < loss(p)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError, match="param 0"):
            sgd_step([np.ones(2)], [np.ones(3)], 0.1)


class TestBackwardPasses:
    """Analytic gradients of the primitives against finite differences."""

    @pytest.mark.parametrize("trial", range(20))
    def test_conv2d_backward(self, trial):
        rng = np.random.default_rng(100 + trial)
        ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        h = int(rng.integers(k, k + 4))
        w_ = int(rng.integers(k, k + 4))
        x = rng.normal(size=(ci, h, w_))
        w = rng.normal(size=(co, ci, k, k))
        y = conv2d(x, w, stride=stride, padding=padding)
        dx, dw = conv2d_backward(x, w, 2.0 * y, stride=stride, padding=padding)

        def loss_x(v):
            return float(np.sum(conv2d(v, w, stride=stride, padding=padding) ** 2))

        def loss_w(v):
            return float(np.sum(conv2d(x, v, stride=stride, padding=padding) ** 2))

        assert max_rel_err(dx, finite_diff_grad(loss_x, x.copy())) <= 1e-3
        assert max_rel_err(dw, finite_diff_grad(loss_w, w.copy())) <= 1e-3

    @pytest.mark.parametrize("trial", range(20))
    def test_depthwise_backward(self, trial):
        rng = np.random.default_rng(200 + trial)
        c = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        h = int(rng.integers(k, k + 4))
        w_ = int(rng.integers(k, k + 4))
        x = rng.normal(size=(c, h, w_))
        kern = rng.normal(size=(c, k, k))
        y = depthwise_conv2d(x, kern, stride=stride, padding=padding)
        dx, dk = depthwise_conv2d_backward(x, kern, 2.0 * y, stride=stride, padding=padding)

        def loss_x(v):
            return float(np.sum(depthwise_conv2d(v, kern, stride=stride, padding=padding) ** 2))

        def loss_k(v):
            return float(np.sum(depthwise_conv2d(x, v, stride=stride, padding=padding) ** 2))

        assert max_rel_err(dx, finite_diff_grad(loss_x, x.copy())) <= 1e-3
        assert max_rel_err(dk, finite_diff_grad(loss_k, kern.copy())) <= 1e-3

    @pytest.mark.parametrize("trial", range(20))
    def test_softmax_backward(self, trial):
        rng = np.random.default_rng(300 + trial)
        v = rng.normal(scale=3.0, size=(3, 7))
        target = rng.normal(size=(3, 7))
        y = softmax(v, axis=1)
        dv = softmax_backward(y, 2.0 * (y - target), axis=1)

        def loss(u):
            return float(np.sum((softmax(u, axis=1) - target) ** 2))

        assert max_rel_err(dv, finite_diff_grad(loss, v.copy())) <= 1e-3
