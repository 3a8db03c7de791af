"""Binary-tree mechanism for continual release of noisy prefix sums.

Nodes live in a heap layout (root 1, children 2i and 2i+1) over ``2^h`` leaves,
``h = ceil(log2 T)``; leaf ``j`` holds stream element ``j + 1``. Every node
starts out holding one noise draw. Adding element ``t`` touches the ``h + 1``
nodes on its leaf-to-root path. Release ``t`` sums the left siblings hanging
off the path to leaf ``t`` (the dyadic cover of elements 1..t; the root when
``t == T``) and pads with fresh draws, so every release carries exactly ``h``
noise vectors on top of the exact prefix sum.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from privbandit.randomness import NoiseSpec, RandomSource, sample_noise


def tree_depth(T: int) -> int:
    """``ceil(log2 T)``, computed exactly on integers."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    return (T - 1).bit_length()


class TreeAggregator:
    """Sequential private prefix sums over a horizon of ``T`` vectors in R^n.

    Args:
        T: number of stream elements.
        noise: coordinate-wise noise law; its dimension is n.
        src: random source owned by this aggregator.
        batch: if set, run that many independent copies side by side; stream
            elements then broadcast against shape (batch, n).
        sampler: replaces the noise draw (``() -> array``); used to instrument
            the mechanism in audits.
    """

    def __init__(self, T: int, noise: NoiseSpec, src: RandomSource | None = None,
                 batch: int | None = None, sampler: Callable | None = None):
        self.depth = tree_depth(T)
        if T == 1 and not noise.is_zero and sampler is None:
            raise ValueError("T = 1 gives a noiseless tree; use T >= 2 with private noise")
        if sampler is None and not noise.is_zero and src is None:
            raise ValueError("a random source is required for non-zero noise")
        self.horizon = int(T)
        self.noise = noise
        self.dimension = noise.dimension
        self.batch = batch
        self._src = src
        self._sampler = sampler
        self.shape = (noise.dimension,) if batch is None else (batch, noise.dimension)
        self.leaves = 1 << self.depth
        self.noise_draws = 0
        self.release_noise_terms: list[int] = []
        self.t = 0

        self._nodes = np.empty((2 * self.leaves,) + self.shape)
        self._nodes[0] = 0.0  # unused slot
        for i in range(1, 2 * self.leaves):
            self._nodes[i] = self._draw()
        self.initial_release = self._draw_sum(self.depth)

    def _draw(self) -> np.ndarray:
        if self._sampler is not None:
            self.noise_draws += 1
            return np.broadcast_to(np.asarray(self._sampler(), dtype=float), self.shape)
        if self.noise.is_zero:
            return np.zeros(self.shape)
        self.noise_draws += 1
        return sample_noise(self._src, self.noise, size=self.batch)

    def _draw_sum(self, count: int) -> np.ndarray:
        total = np.zeros(self.shape)
        for _ in range(count):
            total = total + self._draw()
        return total

    def release_nodes(self, t: int) -> list[int]:
        """Heap indices whose stored sums make up release ``t``."""
        if t == self.horizon:
            return [1]
        nodes = []
        a = self.leaves + t
        while a > 1:
            if a & 1:
                nodes.append(a - 1)
            a >>= 1
        return nodes

    def add_and_release(self, element, t: int) -> np.ndarray:
        if t != self.t + 1:
            raise ValueError(f"releases are sequential: expected t={self.t + 1}, got {t}")
        if t > self.horizon:
            raise ValueError(f"t={t} exceeds the horizon {self.horizon}")
        element = np.asarray(element, dtype=float)
        if element.shape[-1] != self.dimension:
            raise ValueError(f"element dimension {element.shape[-1]} != {self.dimension}")
        a = self.leaves + t - 1
        while a >= 1:
            self._nodes[a] += element
            a >>= 1
        self.t = t

        stored = self.release_nodes(t)
        fresh = max(self.depth - len(stored), 0)
        release = self._nodes[stored].sum(axis=0) + self._draw_sum(fresh)
        self.release_noise_terms.append(len(stored) + fresh if self.depth else 0)
        return release


def init(T: int, n: int, noise: NoiseSpec, src: RandomSource | None = None,
         **kwargs) -> tuple[TreeAggregator, np.ndarray]:
    """Create the tree and return it with the initial release (``depth`` fresh draws)."""
    if noise.dimension != n:
        raise ValueError("noise dimension differs from n")
    agg = TreeAggregator(T, noise, src, **kwargs)
    return agg, agg.initial_release


def add_and_release(agg: TreeAggregator, element, t: int) -> np.ndarray:
    return agg.add_and_release(element, t)


def _positive(**values):
    for name, v in values.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")


def calibrate_laplace(y1: float, T: float, epsilon: float) -> float:
    """Laplace scale ``y1 * ln(T) / epsilon`` for an l1 bound ``y1`` per element."""
    _positive(y1=y1, epsilon=epsilon)
    if T < 2:
        raise ValueError("calibration needs T >= 2")
    return y1 * math.log(T) / epsilon


def calibrate_gaussian(y2: float, T: float, epsilon: float, delta: float) -> float:
    """Gaussian stddev ``(y2/epsilon) * ln(T) * ln(ln(T)/delta)``."""
    _positive(y2=y2, epsilon=epsilon)
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if T < 2:
        raise ValueError("calibration needs T >= 2")
    log_t = math.log(T)
    if log_t <= delta:
        raise ValueError("ln(T)/delta must exceed 1 for a positive scale")
    return (y2 / epsilon) * log_t * math.log(log_t / delta)
