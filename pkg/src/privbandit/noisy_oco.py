"""Online mirror descent (dual averaging) with noisy gradient and map oracles.

With the Euclidean mirror map ``omega(x) = 1/2 ||x||^2`` the map oracle should
return (approximately) ``grad omega*(y)``, the projection of ``y`` onto the
domain. The loop plays ``x_t = NoisyMap(-eta * s_{t-1})`` and accumulates
``s_t = s_{t-1} + g_t`` with ``eta = multiplier * d_omega / (kappa * sqrt(T))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from privbandit import frank_wolfe
from privbandit.geometry import DecisionSet, L2Ball


@dataclass
class NoisyGradOracle:
    """``grad(t, x) -> g`` with E g = grad f_t(x) and E||g||^2 <= kappa^2."""

    grad: Callable[[int, np.ndarray], np.ndarray]
    kappa: float

    def __call__(self, t, x):
        return np.asarray(self.grad(t, x), dtype=float)


@dataclass
class NoisyMapOracle:
    """``map(y) -> x`` in the domain with E||grad omega*(y) - x|| <= gamma."""

    map: Callable[[np.ndarray], np.ndarray]
    dimension: int
    gamma: float = 0.0

    def __call__(self, y):
        return np.asarray(self.map(y), dtype=float)


@dataclass
class OcoTrace:
    iterates: np.ndarray
    gradients: np.ndarray
    dual_sums: np.ndarray
    losses: np.ndarray
    comparator_losses: np.ndarray | None = None
    eta: float = 0.0

    @property
    def regret(self) -> float:
        if self.comparator_losses is None:
            raise ValueError("no comparator supplied")
        return float(self.losses.sum() - self.comparator_losses.sum())


def exact_mirror_map(domain: DecisionSet, y, k_cg: int = 1000) -> np.ndarray:
    """``grad omega*(y)``: closed form on the l2 ball, conditional gradient otherwise."""
    if isinstance(domain, L2Ball):
        return domain.project(y)
    target = frank_wolfe.QuadraticTarget(np.asarray(y, dtype=float), domain)
    return frank_wolfe.solve(target, k_cg).point


def conjugate_value(domain: DecisionSet, y, k_cg: int = 1000) -> float:
    """``omega*(y) = max_x <y, x> - 1/2 ||x||^2``, evaluated at the mirror-map point."""
    x = exact_mirror_map(domain, y, k_cg)
    y = np.asarray(y, dtype=float)
    return float(y @ x - 0.5 * x @ x)


def run(T: int, d_omega: float, grad_oracle: NoisyGradOracle, map_oracle: NoisyMapOracle,
        losses: Sequence[Callable] | None = None, comparator=None,
        eta_multiplier: float = 1.0) -> OcoTrace:
    """Execute the meta-algorithm for ``T`` steps and return the full trace.

    ``losses[t-1]`` (if given) is evaluated at each played point; ``comparator``
    (a fixed point) gives the realized regret.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if not grad_oracle.kappa > 0:
        raise ValueError("kappa must be positive")
    eta = eta_multiplier * d_omega / (grad_oracle.kappa * math.sqrt(T))

    s = np.zeros(map_oracle.dimension)
    iterates, grads, sums, played, comp = [], [], [s.copy()], [], []
    x_star = None if comparator is None else np.asarray(comparator, dtype=float)
    for t in range(1, T + 1):
        x = map_oracle(-eta * s)
        g = grad_oracle(t, x)
        if g.shape != s.shape or x.shape != s.shape:
            raise ValueError(f"oracle returned shape {g.shape}/{x.shape}, expected {s.shape}")
        s = s + g
        iterates.append(x)
        grads.append(g)
        sums.append(s.copy())
        if losses is not None:
            played.append(float(losses[t - 1](x)))
            if x_star is not None:
                comp.append(float(losses[t - 1](x_star)))

    return OcoTrace(
        iterates=np.array(iterates),
        gradients=np.array(grads),
        dual_sums=np.array(sums),
        losses=np.array(played),
        comparator_losses=np.array(comp) if comp else None,
        eta=eta,
    )


def regret_bound(T: int, kappa: float, gamma: float, d_omega: float) -> float:
    """Explicit expected-regret bound ``2 sqrt(T) k d + sqrt(T) k d / 2 + T k gamma``.

    Follows from ``(omega*(0) + omega(x*)) / eta + (eta/2) T kappa^2 + T kappa gamma``
    with ``omega*(0) + omega(x*) <= 2 d^2`` and ``eta = d / (kappa sqrt(T))``.
    """
    for name, v in (("T", T), ("kappa", kappa), ("d_omega", d_omega)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    root = math.sqrt(T) * kappa * d_omega
    return 2.0 * root + 0.5 * root + T * kappa * gamma
