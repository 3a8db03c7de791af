"""Value-only loss oracles and one-point gradient estimation for the smoothed loss.

For a convex L-Lipschitz ``f`` and radius ``delta``, the smoothed loss is
``fhat(x) = E_{u ~ ball} f(x + delta*u)``. It satisfies
``|f(x) - fhat(x)| <= delta*L`` and
``grad fhat(x) = (n/delta) * E_{u ~ sphere} f(x + delta*u) u``,
so a single value query along a random sphere direction gives an unbiased
gradient estimate.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from privbandit.randomness import RandomSource, sample_ball, sample_sphere

UNIT_TOL = 1e-9


class LossOracle:
    """Value access to a loss on R^n, with a call counter.

    Args:
        value: maps a point of shape (n,) to a real.
        lipschitz: Lipschitz constant L of ``value``.
        dimension: ambient dimension n.
        batch_value: optional vectorized form mapping (m, n) to (m,).
    """

    def __init__(self, value: Callable, lipschitz: float, dimension: int,
                 batch_value: Callable | None = None):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if lipschitz < 0:
            raise ValueError("lipschitz constant must be >= 0")
        self._value = value
        self._batch = batch_value
        self.lipschitz = float(lipschitz)
        self.dimension = int(dimension)
        self.calls = 0

    def __call__(self, x) -> float:
        self.calls += 1
        return float(self._value(np.asarray(x, dtype=float)))

    def evaluate_many(self, xs) -> np.ndarray:
        """Evaluate at every row of ``xs``; counts one call per row."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.calls += xs.shape[0]
        if self._batch is not None:
            return np.asarray(self._batch(xs), dtype=float)
        return np.array([float(self._value(x)) for x in xs])

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError("this loss exposes values only")


def _check_radius(delta):
    if not delta > 0:
        raise ValueError(f"smoothing radius must be positive, got {delta}")


def one_point_gradient(f: LossOracle, x, delta: float, u) -> np.ndarray:
    """Return ``(n/delta) * f(x + delta*u) * u`` for a unit vector ``u``."""
    _check_radius(delta)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError("direction u must have unit norm")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    return (n / delta) * f(x + delta * u) * u


def one_point_gradients(f: LossOracle, x, delta: float, directions) -> np.ndarray:
    """Row-wise ``one_point_gradient`` for a stack of unit directions (m, n)."""
    _check_radius(delta)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if np.any(np.abs(np.linalg.norm(directions, axis=1) - 1.0) > UNIT_TOL):
        raise ValueError("every direction must have unit norm")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    values = f.evaluate_many(x + delta * directions)
    return (n / delta) * values[:, None] * directions


def smoothed_value(f: LossOracle, x, delta: float, m: int,
                   src: RandomSource) -> tuple[float, float]:
    """Monte-Carlo estimate of ``fhat(x)`` from ``m`` ball samples.

    Returns ``(estimate, standard_error)``; the standard error is 0 when m == 1.
    """
    _check_radius(delta)
    if m < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=float)
    balls = sample_ball(src, x.shape[0], size=m)
    values = f.evaluate_many(x + delta * balls)
    stderr = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(values.mean()), stderr


def reference_smoothed_gradient(f: LossOracle, x, delta: float, m: int,
                                src: RandomSource) -> np.ndarray:
    """Average of ``m`` one-point estimates; a test oracle for ``grad fhat(x)``."""
    if m < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=float)
    directions = sample_sphere(src, x.shape[0], size=m)
    return one_point_gradients(f, x, delta, directions).mean(axis=0)


def linear_loss(c, offset: float = 0.0) -> LossOracle:
    """``x -> <c, x> + offset`` as an oracle; handy for tests and benchmarks."""
    c = np.asarray(c, dtype=float)
    return LossOracle(lambda x: c @ x + offset, float(np.linalg.norm(c)), c.shape[0],
                      batch_value=lambda xs: xs @ c + offset)
