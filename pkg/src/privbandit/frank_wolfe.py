"""Conditional gradient for ``min_{x in D} q(x) = 1/2 ||x||^2 - <v, x>``.

The minimizer is the Euclidean projection of ``v`` onto ``D``, so this solver is
how the bandit loop evaluates the mirror map without ever projecting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from privbandit.geometry import DecisionSet


@dataclass(frozen=True)
class QuadraticTarget:
    linear_term: np.ndarray
    domain: DecisionSet

    def __post_init__(self):
        v = np.asarray(self.linear_term, dtype=float)
        if v.shape != (self.domain.dimension,):
            raise ValueError("linear term and domain dimensions differ")
        object.__setattr__(self, "linear_term", v)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x) - float(self.linear_term @ x)


@dataclass(frozen=True)
class CgResult:
    point: np.ndarray
    iterations: int
    gap_bound: float
    distance_bound: float


def solve(target: QuadraticTarget, k: int) -> CgResult:
    """Run ``k`` conditional-gradient steps with step size 2/(t+2), t = 0..k-1.

    Step 0 has unit step length and gradient ``-v`` at the origin, so the first
    iterate is ``lmo(-v)``; every step costs exactly one oracle call. The
    returned iterate is a convex combination of oracle outputs and satisfies
    ``q(x_k) - q(x*) <= 10 D^2 / k`` and ``||x_k - x*|| <= sqrt(20) D / sqrt(k)``.
    """
    if k < 1:
        raise ValueError(f"need at least one iteration, got {k}")
    domain = target.domain
    v = target.linear_term
    x = domain.lmo(-v)
    for t in range(1, k):
        s = domain.lmo(x - v)
        gamma = 2.0 / (t + 2)
        x = x + gamma * (s - x)
    d = domain.diameter
    return CgResult(point=x, iterations=k, gap_bound=10.0 * d * d / k,
                    distance_bound=math.sqrt(20.0) * d / math.sqrt(k))
