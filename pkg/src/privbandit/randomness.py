"""Seedable random sources and the privacy noise laws.

Every consumer gets its own child stream, derived from the master seed and a
tuple of labels, so that changing how many draws one component makes never
shifts another component's sequence. Labels may be strings (hashed with CRC32)
or non-negative integers; the derivation is::

    SeedSequence(entropy=master_seed, spawn_key=(key(label_1), key(label_2), ...))
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

ZERO = "zero"
LAPLACE = "laplace"
GAUSSIAN = "gaussian"

# Offset that maps numpy's [0, 1) uniform grid strictly inside (0, 1).
_HALF_ULP = 2.0**-54


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer stream labels must be >= 0, got {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


class RandomSource:
    """A single-owner stream of random draws.

    Two sources built from the same seed and labels produce bitwise-equal
    sequences. Sources are not thread-safe; hand each worker its own child.
    """

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.keys = tuple(_keys)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.keys)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *labels) -> "RandomSource":
        """Independent stream keyed by ``labels`` under this source's seed."""
        return RandomSource(self.seed, self.keys + tuple(_key(lb) for lb in labels))

    def uniform_open(self, size=None):
        """Uniform draws on the open interval (0, 1)."""
        return self.generator.random(size) + _HALF_ULP

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, keys={self.keys})"


@dataclass(frozen=True)
class NoiseSpec:
    """Coordinate-wise noise law over R^n: zero, Laplace(scale) or Gaussian(stddev)."""

    kind: str
    dimension: int
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in (ZERO, LAPLACE, GAUSSIAN):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("noise dimension must be >= 1")
        if self.kind != ZERO and not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"{self.kind} noise needs a finite positive scale, got {self.scale}")

    @classmethod
    def zero(cls, n: int) -> "NoiseSpec":
        return cls(ZERO, n)

    @classmethod
    def laplace(cls, scale: float, n: int) -> "NoiseSpec":
        return cls(LAPLACE, n, float(scale))

    @classmethod
    def gaussian(cls, stddev: float, n: int) -> "NoiseSpec":
        return cls(GAUSSIAN, n, float(stddev))

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO

    @property
    def expected_norm(self) -> float:
        """Closed-form value (or upper bound) for E||X||_2.

        Laplace has no closed form; Jensen gives sqrt(E||X||^2) = sqrt(2n)*scale.
        The Gaussian value is the exact chi mean, which is at most sqrt(n)*stddev.
        """
        n = self.dimension
        if self.kind == ZERO:
            return 0.0
        if self.kind == LAPLACE:
            return math.sqrt(2.0 * n) * self.scale
        log_ratio = math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0)
        return self.scale * math.sqrt(2.0) * math.exp(log_ratio)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension, "scale": self.scale}


def _check_dim(n: int):
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")


def sample_sphere(src: RandomSource, n: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the unit sphere S^{n-1} by normalizing a Gaussian."""
    _check_dim(n)
    shape = (n,) if size is None else (size, n)
    g = src.generator.standard_normal(shape)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norms


def sample_ball(src: RandomSource, n: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the unit ball: a sphere point scaled by U^(1/n)."""
    u = sample_sphere(src, n, size)
    radius = src.uniform_open(None if size is None else (size, 1)) ** (1.0 / n)
    return u * radius


def laplace_from_uniform(w, scale: float):
    """Inverse CDF of Laplace(0, scale) applied to uniforms ``w`` in (0, 1)."""
    w = np.asarray(w, dtype=float)
    centered = w - 0.5
    return -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))


def sample_noise(src: RandomSource, spec: NoiseSpec, size: int | None = None) -> np.ndarray:
    """Draw one noise vector (or ``size`` of them) from ``spec``.

    Laplace coordinates consume exactly one uniform each. The zero law consumes
    nothing from ``src``.
    """
    shape = (spec.dimension,) if size is None else (size, spec.dimension)
    if spec.kind == ZERO:
        return np.zeros(shape)
    if spec.kind == LAPLACE:
        return laplace_from_uniform(src.uniform_open(shape), spec.scale)
    return spec.scale * src.generator.standard_normal(shape)
