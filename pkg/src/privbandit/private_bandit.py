"""Private projection-free bandit convex optimization.

The horizon ``T`` is split into ``T_r = sqrt(T)`` rounds of ``T_b = sqrt(T)``
plays. In round ``R`` every play perturbs the same base point
``x_{R-1}`` by ``delta * u_t`` along a fresh sphere direction, and the
one-point estimates are summed into ``g_R``. The batch sums go through the
tree mechanism; the next base point minimizes ``1/2||x||^2 + eta <s_{R-1}, x>``
by ``T_b`` conditional-gradient steps, using the release from one round
earlier. Losses are queried once per play and the oracle is called once per
play, amortized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from privbandit import frank_wolfe, privacy_audit
from privbandit.geometry import DecisionSet, shrink_wrap
from privbandit.randomness import NoiseSpec, RandomSource, sample_sphere
from privbandit.smoothing import LossOracle
from privbandit.tree_agg import TreeAggregator

ENLARGED = "enlarged"
SHRINK_WRAP = "shrink_wrap"
PRIVACY_MODES = ("none", "pure", "approx")


@dataclass(frozen=True)
class Privacy:
    mode: str = "none"
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.mode not in PRIVACY_MODES:
            raise ValueError(f"privacy mode must be one of {PRIVACY_MODES}, got {self.mode!r}")
        if self.mode != "none" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("private modes need epsilon > 0")
        if self.mode == "approx" and not (self.delta is not None and 0 < self.delta < 1):
            raise ValueError("approximate DP needs 0 < delta < 1")

    @classmethod
    def pure(cls, epsilon: float) -> "Privacy":
        return cls("pure", float(epsilon))

    @classmethod
    def approx(cls, epsilon: float, delta: float) -> "Privacy":
        return cls("approx", float(epsilon), float(delta))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "epsilon": self.epsilon, "delta": self.delta}


NO_PRIVACY = Privacy()


@dataclass(frozen=True)
class BanditParams:
    T: int
    T_r: int
    T_b: int
    eta: float
    delta_smooth: float
    n: int
    L: float
    D: float
    privacy: Privacy = NO_PRIVACY
    noise: NoiseSpec | None = None
    feasibility_mode: str = ENLARGED

    def to_dict(self) -> dict:
        return {
            "T": self.T, "T_r": self.T_r, "T_b": self.T_b, "eta": self.eta,
            "delta_smooth": self.delta_smooth, "n": self.n, "L": self.L, "D": self.D,
            "privacy": self.privacy.to_dict(),
            "noise": None if self.noise is None else self.noise.to_dict(),
            "feasibility_mode": self.feasibility_mode,
        }


def round_to_square(T: int) -> int:
    """Largest perfect square not exceeding ``T``."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    return math.isqrt(T) ** 2


def schedule(T: int, n: int, L: float | None, D: float | None, privacy: Privacy = NO_PRIVACY,
             feasibility_mode: str = ENLARGED, inner_radius: float | None = None) -> BanditParams:
    """Fill in rounds, batch size, learning rate, smoothing radius and noise.

    ``T_r = T_b = sqrt(T)``, ``eta = D / (T^{3/4} sqrt(n) L)`` and
    ``delta = D sqrt(n) / T^{1/4}``.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    root = math.isqrt(T) if T >= 1 else 0
    if T < 1 or root * root != T:
        raise ValueError(f"T={T} is not a perfect square; try {round_to_square(max(T, 1))}")
    if L is None or D is None:
        raise ValueError("the schedule needs both the Lipschitz constant L and the diameter D")
    if not (L > 0 and D > 0):
        raise ValueError("L and D must be positive")
    if feasibility_mode not in (ENLARGED, SHRINK_WRAP):
        raise ValueError(f"unknown feasibility mode {feasibility_mode!r}")
    eta = D / (T**0.75 * math.sqrt(n) * L)
    delta_smooth = D * math.sqrt(n) / T**0.25
    if feasibility_mode == SHRINK_WRAP:
        if inner_radius is None:
            raise ValueError("shrink wrapping needs a domain with an inner ball")
        if not delta_smooth < inner_radius:
            raise ValueError(f"smoothing radius {delta_smooth:.4g} must be below the inner "
                             f"radius {inner_radius:.4g}; increase T")
    params = BanditParams(T=T, T_r=root, T_b=T // root, eta=eta, delta_smooth=delta_smooth,
                          n=n, L=float(L), D=float(D), privacy=privacy,
                          feasibility_mode=feasibility_mode)
    return replace(params, noise=privacy_audit.choose_noise(params, privacy))


def gradient_batch_norm_bound(params: BanditParams) -> float:
    """``kappa^2 = T_b (L D n / delta)^2 + T_b^2 L^2``, bounding E||g_R||^2."""
    m_f = params.L * params.D * params.n / params.delta_smooth
    return params.T_b * m_f**2 + params.T_b**2 * params.L**2


@dataclass
class RegretTrace:
    played: np.ndarray          # (T, n) points x_t
    losses: np.ndarray          # (T,) incurred f_t(x_t)
    rounds: np.ndarray          # (T,) round index R of each play
    directions: np.ndarray      # (T, n) sphere draws u_t
    base_points: np.ndarray     # (T_r, n) x_0 .. x_{T_r - 1}
    batch_gradients: np.ndarray  # (T_r, n) g_1 .. g_{T_r}
    releases: np.ndarray        # (T_r + 1, n) s_0 .. s_{T_r}
    noise_draws: int
    lmo_calls: int
    loss_queries: int
    comparator: float | None = None
    cumulative_regret: np.ndarray | None = None

    @property
    def cumulative_loss(self) -> np.ndarray:
        return np.cumsum(self.losses)

    @property
    def total_loss(self) -> float:
        return float(self.losses.sum())


class _CountingDomain:
    """Forward oracle calls to ``domain`` and count them."""

    def __init__(self, domain: DecisionSet):
        self._domain = domain
        self.dimension = domain.dimension
        self.diameter = domain.diameter
        self.calls = 0

    def lmo(self, v):
        self.calls += 1
        return self._domain.lmo(v)


def run(domain: DecisionSet, losses: Sequence[LossOracle], params: BanditParams,
        src: RandomSource) -> RegretTrace:
    """Play ``params.T`` steps against the oblivious loss sequence ``losses``.

    In shrink-wrap mode each loss is queried at ``(1 - delta/r)(x + delta u)``,
    which is both the played point and the point its gradient estimate uses.
    """
    T, n, T_b, T_r = params.T, params.n, params.T_b, params.T_r
    delta = params.delta_smooth
    if len(losses) != T:
        raise ValueError(f"expected {T} losses, got {len(losses)}")
    if domain.dimension != n:
        raise ValueError("domain dimension differs from params.n")
    if params.noise is None:
        raise ValueError("params carry no noise law; build them with schedule()")

    shrink = 1.0
    if params.feasibility_mode == SHRINK_WRAP:
        r = domain.inner_radius
        if r is None or not delta < r:
            raise ValueError("shrink wrapping needs an inner radius larger than the smoothing radius")
        shrink = 1.0 - delta / r
        queried = [shrink_wrap(domain, f, delta) for f in losses]
    else:
        queried = list(losses)

    counting = _CountingDomain(domain)
    directions_src = src.child("directions")
    tree = TreeAggregator(T_r, params.noise, src.child("tree"))

    played = np.empty((T, n))
    incurred = np.empty(T)
    rounds = np.empty(T, dtype=int)
    directions = np.empty((T, n))
    bases = np.empty((T_r, n))
    batch_grads = np.empty((T_r, n))
    releases = np.empty((T_r + 1, n))
    releases[0] = tree.initial_release
    queries_before = sum(f.calls for f in queried)

    x_base = frank_wolfe.solve(frank_wolfe.QuadraticTarget(np.zeros(n), counting), T_b).point
    scale = n / delta
    for R in range(1, T_r + 1):
        bases[R - 1] = x_base
        g = np.zeros(n)
        for r in range(1, T_b + 1):
            t = (R - 1) * T_b + r
            u = sample_sphere(directions_src, n)
            value = queried[t - 1](x_base + delta * u)
            if not math.isfinite(value):
                raise ValueError(f"loss {t} returned a non-finite value")
            g += (scale * value) * u
            directions[t - 1] = u
            played[t - 1] = shrink * (x_base + delta * u)
            incurred[t - 1] = value
            rounds[t - 1] = R
        batch_grads[R - 1] = g
        releases[R] = tree.add_and_release(g, R)
        if R < T_r:
            # The final base point would never be played, so it is not computed.
            target = frank_wolfe.QuadraticTarget(-params.eta * releases[R - 1], counting)
            x_base = frank_wolfe.solve(target, T_b).point

    return RegretTrace(
        played=played, losses=incurred, rounds=rounds, directions=directions,
        base_points=bases, batch_gradients=batch_grads, releases=releases,
        noise_draws=tree.noise_draws, lmo_calls=counting.calls,
        loss_queries=sum(f.calls for f in queried) - queries_before,
    )
