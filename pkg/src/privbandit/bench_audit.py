"""Synthetic adversaries, offline comparators, regret, and statistical audits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from privbandit import private_bandit
from privbandit.geometry import DecisionSet
from privbandit.privacy_audit import concentration_bound
from privbandit.randomness import RandomSource, sample_sphere
from privbandit.smoothing import LossOracle

log = logging.getLogger(__name__)

FIXED_LINEAR = "fixed_linear"
ROTATING_LINEAR = "rotating_linear"
QUADRATIC = "quadratic"


class LinearLoss(LossOracle):
    """``<coef, x> + offset``."""

    def __init__(self, coef, offset: float = 0.0):
        coef = np.asarray(coef, dtype=float)
        self.coef = coef
        self.offset = float(offset)
        super().__init__(lambda x: coef @ x + self.offset, float(np.linalg.norm(coef)),
                         coef.shape[0], batch_value=lambda xs: xs @ coef + self.offset)

    def gradient(self, x):
        return self.coef.copy()


class QuadraticLoss(LossOracle):
    """``curvature/2 * ||x - center||^2``, Lipschitz ``curvature * D`` on a set of diameter D."""

    def __init__(self, center, curvature: float, lipschitz: float):
        center = np.asarray(center, dtype=float)
        self.center = center
        self.curvature = float(curvature)
        a = self.curvature
        super().__init__(lambda x: 0.5 * a * float((x - center) @ (x - center)), lipschitz,
                         center.shape[0],
                         batch_value=lambda xs: 0.5 * a * np.sum((xs - center) ** 2, axis=1))

    def gradient(self, x):
        return self.curvature * (np.asarray(x, dtype=float) - self.center)


@dataclass
class AdversarySpec:
    """Oblivious loss sequence description.

    ``fixed_linear`` uses ``directions[0]`` every step; ``rotating_linear``
    switches to the next direction every ``period`` steps; ``quadratic`` cycles
    through ``centers`` (or draws ``random_centers`` feasible points).
    """

    kind: str
    directions: list = field(default_factory=list)
    period: int = 1
    centers: list = field(default_factory=list)
    random_centers: int = 0

    @classmethod
    def from_config(cls, cfg: dict) -> "AdversarySpec":
        kind = cfg.get("kind")
        if kind == FIXED_LINEAR:
            return cls(kind, directions=[cfg["c"]])
        if kind == ROTATING_LINEAR:
            return cls(kind, directions=list(cfg["cs"]), period=int(cfg.get("period", 1)))
        if kind == QUADRATIC:
            return cls(kind, centers=list(cfg.get("centers", [])),
                       random_centers=int(cfg.get("random_centers", 0)))
        raise ValueError(f"unknown adversary kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == FIXED_LINEAR:
            return {"kind": self.kind, "c": list(map(float, self.directions[0]))}
        if self.kind == ROTATING_LINEAR:
            return {"kind": self.kind, "cs": [list(map(float, c)) for c in self.directions],
                    "period": self.period}
        cfg = {"kind": self.kind}
        if self.centers:
            cfg["centers"] = [list(map(float, z)) for z in self.centers]
        if self.random_centers:
            cfg["random_centers"] = self.random_centers
        return cfg


def random_feasible_points(domain: DecisionSet, m: int, src: RandomSource) -> np.ndarray:
    """``m`` points of ``domain``, each a Dirichlet mixture of ``n + 1`` oracle vertices."""
    n = domain.dimension
    dirs = sample_sphere(src, n, size=m * (n + 1)).reshape(m, n + 1, n)
    weights = src.generator.dirichlet(np.ones(n + 1), size=m)
    pts = np.empty((m, n))
    for i in range(m):
        verts = np.array([domain.lmo(d) for d in dirs[i]])
        pts[i] = weights[i] @ verts
    return pts


def _normalized_linear(c, domain: DecisionSet, L: float) -> LinearLoss:
    c = np.asarray(c, dtype=float)
    if c.shape != (domain.dimension,):
        raise ValueError(f"direction {c} does not match dimension {domain.dimension}")
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ValueError("adversary directions must be non-zero")
    coef = L * c / norm
    return LinearLoss(coef, -float(coef @ domain.lmo(coef)))


def make_losses(spec: AdversarySpec, domain: DecisionSet, T: int, L: float,
                src: RandomSource | None = None) -> list[LossOracle]:
    """``T`` losses, each L-Lipschitz on ``domain`` with minimum 0 there."""
    if spec.kind in (FIXED_LINEAR, ROTATING_LINEAR):
        if not spec.directions:
            raise ValueError("linear adversaries need at least one direction")
        if spec.period < 1:
            raise ValueError("period must be >= 1")
        k = len(spec.directions) if spec.kind == ROTATING_LINEAR else 1
        return [_normalized_linear(spec.directions[((t // spec.period) % k)], domain, L)
                for t in range(T)]
    if spec.kind == QUADRATIC:
        centers = [np.asarray(z, dtype=float) for z in spec.centers]
        if spec.random_centers:
            if src is None:
                raise ValueError("random centers need a random source")
            centers += list(random_feasible_points(domain, spec.random_centers, src))
        if not centers:
            raise ValueError("quadratic adversary needs centers")
        for z in centers:
            if not domain.contains(z):
                raise ValueError(f"center {z} lies outside the domain")
        curvature = L / domain.diameter
        return [QuadraticLoss(centers[t % len(centers)], curvature, L) for t in range(T)]
    raise ValueError(f"unknown adversary kind {spec.kind!r}")


@dataclass(frozen=True)
class Comparator:
    """Best fixed point found offline; ``gap`` certifies ``value - min <= gap``."""

    value: float
    point: np.ndarray
    gap: float = 0.0

    def to_dict(self) -> dict:
        return {"value": self.value, "gap": self.gap, "point": [float(v) for v in self.point]}


def comparator_loss(losses: Sequence[LossOracle], domain: DecisionSet,
                    k_cg: int = 20_000_000, tol: float = 1e-12) -> Comparator:
    """Minimize ``sum_t f_t`` over ``domain``.

    Sums of linear and quadratic losses collapse to
    ``<a, x> + A/2 ||x||^2 - <b, x> + const``; purely linear sums are solved by
    one oracle call, purely quadratic sums by the weighted centre (feasible by
    convexity). Anything else runs conditional gradient for at most ``k_cg``
    steps, stopping early once the duality gap falls below ``tol`` times the
    loss scale.
    """
    n = domain.dimension
    lin = np.zeros(n)
    curv = 0.0
    pull = np.zeros(n)
    structured = True
    for f in losses:
        if isinstance(f, LinearLoss):
            lin += f.coef
        elif isinstance(f, QuadraticLoss):
            curv += f.curvature
            pull += f.curvature * f.center
        else:
            structured = False
            break

    def total(x):
        vals = [f(x) for f in losses]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("a loss returned a non-finite value")
        return math.fsum(vals)

    if structured and curv == 0.0:
        x = domain.lmo(lin)
        return Comparator(total(x), x, 0.0)
    if structured and not lin.any():
        x = pull / curv
        if domain.contains(x):
            return Comparator(total(x), x, 0.0)

    if structured:
        def grad(x):
            return lin + curv * x - pull
    else:
        try:
            grads = [f.gradient for f in losses]
            grads[0](domain.lmo(np.zeros(n)))
        except NotImplementedError:
            raise ValueError("general comparators need losses with gradients") from None

        def grad(x):
            return np.sum([g(x) for g in grads], axis=0)

    scale = max(1.0, sum(f.lipschitz for f in losses) * domain.diameter)
    x = domain.lmo(grad(np.zeros(n)))
    gap = math.inf
    for t in range(1, k_cg + 1):
        g = grad(x)
        s = domain.lmo(g)
        gap = float(g @ (x - s))
        if gap <= tol * scale:
            break
        x = x + 2.0 / (t + 2) * (s - x)
    else:
        g = grad(x)
        gap = float(g @ (x - domain.lmo(g)))
    return Comparator(total(x), x, max(gap, 0.0))


def regret(trace, comparator, losses: Sequence[LossOracle] | None = None) -> float:
    """Cumulative incurred loss minus the comparator's; fills the per-step curve.

    Given the losses and a :class:`Comparator`, the curve is
    ``sum_{s<=t} f_s(x_s) - f_s(x*)``; otherwise the comparator value is spread
    evenly over the horizon.
    """
    cum = trace.cumulative_loss
    steps = np.arange(1, cum.size + 1)
    if isinstance(comparator, Comparator):
        total = comparator.value
        if losses is not None:
            comp_curve = np.cumsum([f(comparator.point) for f in losses])
        else:
            comp_curve = total * steps / cum.size
    else:
        total = float(comparator)
        comp_curve = total * steps / max(cum.size, 1)
    trace.comparator = total
    trace.cumulative_regret = cum - comp_curve
    return float(cum[-1] - total) if cum.size else -total


def operator_norm(Z: np.ndarray, iterations: int = 50, start_seed: int = 0) -> np.ndarray:
    """Spectral norm of each matrix in a (batch, n, k) stack by power iteration.

    Iterates on the smaller Gram matrix from a fixed-seed start vector.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 2:
        return operator_norm(Z[None], iterations, start_seed)[0]
    gram = Z @ np.swapaxes(Z, 1, 2) if Z.shape[1] <= Z.shape[2] else np.swapaxes(Z, 1, 2) @ Z
    m = gram.shape[1]
    v = np.random.default_rng(start_seed).standard_normal(m)
    v = np.broadcast_to(v / np.linalg.norm(v), (gram.shape[0], m)).copy()
    for _ in range(iterations):
        w = np.einsum("bij,bj->bi", gram, v)
        norms = np.linalg.norm(w, axis=1, keepdims=True)
        v = np.where(norms > 0, w / np.where(norms > 0, norms, 1.0), v)
    rayleigh = np.einsum("bi,bij,bj->b", v, gram, v)
    return np.sqrt(np.maximum(rayleigh, 0.0))


def concentration_check(n: int, k: int, delta: float, scale: float, trials: int,
                        src: RandomSource) -> float:
    """Fraction of trials where ``||Z|| * scale`` exceeds the concentration bound.

    Each trial stacks ``k`` uniform unit vectors as the columns of ``Z``; the
    worst ``c`` with ``||c|| <= scale`` gives ``||Z c|| = ||Z|| * scale``.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    bound = concentration_bound(n, k, delta, scale)
    cols = sample_sphere(src, n, size=trials * k).reshape(trials, k, n)
    norms = operator_norm(np.swapaxes(cols, 1, 2))
    return float(np.mean(norms * scale > bound))


@dataclass
class ExponentFit:
    grid: list
    mean_regrets: list
    stderrs: list
    slope: float
    intercept: float
    half_width: float
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "mean_regrets": list(self.mean_regrets),
            "stderrs": list(self.stderrs),
            "slope": self.slope,
            "intercept": self.intercept,
            "half_width": self.half_width,
            "excluded": list(self.excluded),
        }


def _loglog_slope(ts, means):
    A = np.column_stack([np.log(ts), np.ones(len(ts))])
    coef, *_ = np.linalg.lstsq(A, np.log(means), rcond=None)
    return float(coef[0]), float(coef[1])


def fit_exponent(grid: Sequence[int], runner: Callable[[int, int], float], seeds: int,
                 src: RandomSource | None = None, bootstrap: int = 1000,
                 samples: dict | None = None) -> ExponentFit:
    """Fit ``log(mean regret) ~ slope * log(T)`` over ``grid``.

    ``runner(T, seed_index)`` returns one realized regret. Grid points whose mean
    regret is not positive are dropped and listed in ``excluded``. The half-width
    is half the central 95% bootstrap interval of the slope (seeds resampled
    within each T). Pass ``samples`` ({T: regrets}) to reuse finished runs.
    """
    grid = [int(T) for T in grid]
    if len(grid) < 4:
        raise ValueError(f"an exponent fit needs at least 4 horizons, got {len(grid)}")
    for T in grid:
        if math.isqrt(T) ** 2 != T:
            raise ValueError(f"grid point {T} is not a perfect square")
    if seeds < 10:
        raise ValueError("need at least 10 seeds per horizon")
    if samples is None:
        samples = {T: np.array([runner(T, s) for s in range(seeds)], dtype=float) for T in grid}

    kept, excluded = [], []
    for T in grid:
        m = float(np.mean(samples[T]))
        if m > 0 and math.isfinite(m):
            kept.append(T)
        else:
            excluded.append({"T": T, "mean_regret": m})
            log.warning("dropping T=%d from the fit: mean regret %r", T, m)
    if len(kept) < 2:
        raise ValueError("fewer than two horizons with positive mean regret")

    means = np.array([np.mean(samples[T]) for T in kept])
    slope, intercept = _loglog_slope(kept, means)

    rng = (src or RandomSource(0)).child("bootstrap").generator
    boots = []
    for _ in range(bootstrap):
        resampled = np.array([np.mean(rng.choice(samples[T], size=len(samples[T])))
                              for T in kept])
        if np.all(resampled > 0):
            boots.append(_loglog_slope(kept, resampled)[0])
    if boots:
        lo, hi = np.quantile(boots, [0.025, 0.975])
        half = float(hi - lo) / 2.0
    else:
        half = math.inf

    return ExponentFit(
        grid=list(grid),
        mean_regrets=[float(np.mean(samples[T])) for T in grid],
        stderrs=[float(np.std(samples[T], ddof=1) / math.sqrt(len(samples[T]))) for T in grid],
        slope=slope, intercept=intercept, half_width=half, excluded=excluded,
    )


def run_experiment(domain: DecisionSet, adversary: AdversarySpec, T: int, L: float,
                   privacy=private_bandit.NO_PRIVACY, src: RandomSource | None = None,
                   feasibility_mode: str = private_bandit.ENLARGED, D: float | None = None):
    """One bandit run with its comparator; returns ``(trace, comparator, params)``."""
    src = src or RandomSource(0)
    D = domain.diameter if D is None else D
    params = private_bandit.schedule(T, domain.dimension, L, D, privacy, feasibility_mode,
                                     domain.inner_radius)
    losses = make_losses(adversary, domain, T, L, src.child("adversary"))
    trace = private_bandit.run(domain, losses, params, src.child("bandit"))
    comp = comparator_loss(losses, domain)
    regret(trace, comp, losses)
    return trace, comp, params
