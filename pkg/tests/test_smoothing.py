import math

import numpy as np
import pytest

from privbandit.randomness import RandomSource, sample_ball, sample_sphere
from privbandit.smoothing import (LossOracle, linear_loss, one_point_gradient,
                                  one_point_gradients, reference_smoothed_gradient,
                                  smoothed_value)


def quadratic():
    return LossOracle(lambda x: 0.5 * float(x @ x), 10.0, 2,
                      batch_value=lambda xs: 0.5 * np.sum(xs * xs, axis=1))


def l1_norm(n):
    return LossOracle(lambda x: float(np.abs(x).sum()), math.sqrt(n), n,
                      batch_value=lambda xs: np.abs(xs).sum(axis=1))


class TestOnePoint:
    def test_along_the_gradient(self):
        f = linear_loss([1.0, 0.0])
        np.testing.assert_allclose(one_point_gradient(f, [0, 0], 0.5, [1, 0]), [2, 0])

    def test_orthogonal_direction_vanishes(self):
        f = linear_loss([1.0, 0.0])
        np.testing.assert_allclose(one_point_gradient(f, [0, 0], 0.5, [0, 1]), [0, 0])

    def test_mean_recovers_linear_gradient(self, src):
        f = linear_loss([1.0, 2.0])
        est = one_point_gradients(f, [0.1, 0.1], 0.2, sample_sphere(src, 2, size=100_000))
        assert np.all(np.abs(est.mean(axis=0) - [1, 2]) < 0.05)

    def test_one_query_per_estimate(self, src):
        f = linear_loss([1.0, 2.0])
        one_point_gradients(f, [0, 0], 0.1, sample_sphere(src, 2, size=37))
        one_point_gradient(f, [0, 0], 0.1, [1, 0])
        assert f.calls == 38

    def test_magnitude_bound(self, src):
        # With min f = 0 on the queried region, |f| <= L*D, so ||g|| <= (n/delta) L D.
        n, delta, D = 3, 0.3, 2.0
        c = np.array([1.0, -2.0, 0.5])
        L = np.linalg.norm(c)
        f = linear_loss(c, offset=L * D / 2)
        x = np.zeros(n)
        dirs = sample_sphere(src, n, size=5000)
        x_scaled = 0.7 * (D / 2 - delta) * sample_ball(src, n)
        g = one_point_gradients(f, x + x_scaled, delta, dirs)
        assert np.all(np.linalg.norm(g, axis=1) <= n / delta * L * D)

    @pytest.mark.parametrize("delta", [0.0, -1.0])
    def test_radius_must_be_positive(self, delta):
        with pytest.raises(ValueError):
            one_point_gradient(linear_loss([1.0]), [0.0], delta, [1.0])

    def test_direction_must_be_unit(self):
        with pytest.raises(ValueError):
            one_point_gradient(linear_loss([1.0, 0.0]), [0, 0], 0.1, [1.0, 1.0])


class TestSmoothedValue:
    def test_linear_loss_unbiased(self, src):
        f = linear_loss([0.3, -1.2, 2.0], offset=0.5)
        x = np.array([0.2, 0.1, -0.4])
        est, se = smoothed_value(f, x, 0.7, 100_000, src)
        assert abs(est - f(x)) <= 3 * se

    def test_abs_at_origin(self, src):
        est, se = smoothed_value(l1_norm(1), [0.0], 1.0, 100_000, src)
        assert abs(est - 0.5) <= 3 * se

    def test_single_sample_has_zero_stderr(self, src):
        assert smoothed_value(linear_loss([1.0]), [0.0], 0.1, 1, src)[1] == 0.0

    def test_bias_bound_piecewise_linear(self, src):
        rng = np.random.default_rng(0)
        n, delta = 3, 0.5
        f = l1_norm(n)
        for _ in range(10):
            x = rng.uniform(-1, 1, n)
            est, se = smoothed_value(f, x, delta, 20_000, src)
            assert abs(est - f(x)) <= delta * f.lipschitz + 3 * se


class TestReferenceGradient:
    def test_linear(self, src):
        g = reference_smoothed_gradient(linear_loss([1.0, 0.0]), [0.0, 0.0], 0.3, 100_000, src)
        assert np.all(np.abs(g - [1, 0]) < 0.05)

    def test_single_sample_matches_one_point(self):
        f = linear_loss([1.0, -1.0])
        g = reference_smoothed_gradient(f, [0.2, 0.2], 0.4, 1, RandomSource(3))
        u = sample_sphere(RandomSource(3), 2, size=1)[0]
        np.testing.assert_allclose(g, one_point_gradient(f, [0.2, 0.2], 0.4, u))

    def test_quadratic(self, src):
        # Per-coordinate stderr is about (n/delta) f(x) / sqrt(2m); 10^6 samples put
        # the 0.05 tolerance at roughly 7 standard errors.
        g = reference_smoothed_gradient(quadratic(), [1.0, 0.0], 0.1, 1_000_000, src)
        assert np.all(np.abs(g - [1, 0]) < 0.05)


def test_oracle_without_gradient():
    with pytest.raises(NotImplementedError):
        linear_loss([1.0]).gradient([0.0])
