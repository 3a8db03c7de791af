"""Sensitivity bounds, noise calibration cross-checks and an empirical DP probe.

Two derivations of each sensitivity are carried side by side:

* l1 (pure DP): each released batch sum adds ``T_b`` unit directions scaled by
  at most ``M_F = L*D*n/delta_smooth``, so ``||g_R||_1 <= T_b * sqrt(n) * M_F``.
  The closed form ``sqrt(T) * n * L`` is smaller and is reported as
  ``closed_form``.
* l2 (approximate DP): a high-probability bound from the random-matrix
  concentration inequality, with the per-batch scalar vector bounded either by
  ``sqrt(T_b) * M_F`` (its l2 norm, conservative) or by ``M_F``.

The noise actually used is the maximum over all variants. Logarithms are natural.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from privbandit.randomness import NoiseSpec, RandomSource
from privbandit.tree_agg import TreeAggregator, calibrate_gaussian, calibrate_laplace

LOG_BASE = "natural"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class L2Sensitivity:
    conservative: float
    per_term_delta: float
    delta0: float


def per_term_bound(params) -> float:
    """``M_F = L*D*n/delta_smooth``, the bound on ``|n/delta * f(x)|`` when min f = 0."""
    return params.L * params.D * params.n / params.delta_smooth


def concentration_factor(n: int, k: int, delta: float) -> float:
    """``log((n+k)/delta) + sqrt((1 + k/n) log((n+k)/delta))``."""
    if not 0 < delta < 1:
        raise ValueError(f"failure probability must lie in (0, 1), got {delta}")
    log_term = math.log((n + k) / delta)
    return log_term + math.sqrt((1.0 + k / n) * log_term)


def concentration_bound(n: int, k: int, delta: float, scale: float) -> float:
    """Bound ``10 * scale * factor`` on ``||sum_i u_i c_i||`` over all ``||c|| <= scale``."""
    return 10.0 * scale * concentration_factor(n, k, delta)


def sensitivity_l1(params) -> tuple[float, float]:
    """Return ``(first_principles, closed_form)`` l1 bounds per stream element."""
    first = params.T_b * math.sqrt(params.n) * per_term_bound(params)
    displayed = math.sqrt(params.T) * params.n * params.L
    return first, displayed


def sensitivity_l2_worst_case(params) -> float:
    """Deterministic l2 bound ``T_b * M_F`` from the triangle inequality.

    Together with the l1 bound it satisfies ``y2 <= y1 <= sqrt(n) * y2``.
    """
    return params.T_b * per_term_bound(params)


def sensitivity_l2_highprob(params, delta0: float) -> L2Sensitivity:
    """High-probability l2 bound on one batch sum, failing with probability ``delta0``.

    Uses ``k = T_b`` directions; the conservative variant takes
    ``Delta = sqrt(T_b) * M_F``, the other ``Delta = M_F``.
    """
    if not 0 < delta0 < 1:
        raise ValueError(f"delta0 must lie in (0, 1), got {delta0}")
    m_f = per_term_bound(params)
    factor = 10.0 * concentration_factor(params.n, params.T_b, delta0)
    return L2Sensitivity(conservative=math.sqrt(params.T_b) * m_f * factor,
                         per_term_delta=m_f * factor, delta0=delta0)


def gaussian_sigma_displayed(T: int, n: int, L: float, epsilon: float, delta: float) -> float:
    """The closed-form Gaussian stddev stated for the whole algorithm (no constant 10)."""
    log_t = math.log(T)
    log_nt = math.log((n + T) / delta)
    bracket = log_nt + math.sqrt((1.0 + math.sqrt(T) / n) * log_nt)
    return T**0.25 * math.sqrt(n) * L * log_t * math.log(T / delta) / epsilon * bracket


def gaussian_variants(params, epsilon: float, delta: float) -> dict[str, float]:
    """Every Gaussian calibration we can derive; the maximum is the safe choice.

    The union bound over ``sqrt(T)`` batches uses ``delta0 = delta / (2 sqrt(T))``
    and leaves ``delta1 = delta / 2`` for the tree mechanism, whose scale is
    ``Y2 * ln(T) * ln(T/delta1) / epsilon``.
    """
    T = params.T
    delta0 = delta / (2.0 * math.sqrt(T))
    delta1 = delta / 2.0
    y2 = sensitivity_l2_highprob(params, delta0)
    tree_factor = math.log(T) * math.log(T / delta1) / epsilon
    return {
        "conservative_delta": y2.conservative * tree_factor,
        "per_term_delta": y2.per_term_delta * tree_factor,
        "closed_form": gaussian_sigma_displayed(T, params.n, params.L, epsilon, delta),
        "tree_loglog_conservative": calibrate_gaussian(y2.conservative, T, epsilon, delta1),
    }


def laplace_variants(params, epsilon: float) -> dict[str, float]:
    first, displayed = sensitivity_l1(params)
    return {
        "first_principles": calibrate_laplace(first, params.T, epsilon),
        "closed_form": calibrate_laplace(displayed, params.T, epsilon),
    }


def choose_noise(params, privacy) -> NoiseSpec:
    """Noise law for a privacy setting: the largest calibrated scale, or zero."""
    if privacy is None or privacy.mode == "none":
        return NoiseSpec.zero(params.n)
    if privacy.mode == "pure":
        return NoiseSpec.laplace(max(laplace_variants(params, privacy.epsilon).values()), params.n)
    if privacy.mode == "approx":
        variants = gaussian_variants(params, privacy.epsilon, privacy.delta)
        return NoiseSpec.gaussian(max(variants.values()), params.n)
    raise ValueError(f"unknown privacy mode {privacy.mode!r}")


@dataclass
class CalibrationReport:
    regime: str | None = None
    log_base: str = LOG_BASE
    sensitivities: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)
    chosen_scale: float | None = None
    closed_form_scale: float | None = None
    flags: list = field(default_factory=list)

    @property
    def conservative(self) -> bool:
        if self.chosen_scale is None:
            return True
        return all(self.chosen_scale >= v for v in self.variants.values())

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "log_base": self.log_base,
            "sensitivities": dict(self.sensitivities),
            "variants": dict(self.variants),
            "chosen_scale": self.chosen_scale,
            "closed_form_scale": self.closed_form_scale,
            "conservative": self.conservative,
            "flags": list(self.flags),
        }


def calibration_report(params, delta: float | None = None) -> CalibrationReport:
    """Assemble every derived scale for ``params.privacy`` and flag disagreements.

    ``delta`` overrides the approximate-DP failure probability in ``params``.
    """
    privacy = params.privacy
    if privacy is None or privacy.mode == "none":
        return CalibrationReport()
    eps = privacy.epsilon
    first, displayed = sensitivity_l1(params)
    if privacy.mode == "pure":
        variants = laplace_variants(params, eps)
        report = CalibrationReport(
            regime="pure",
            sensitivities={"y1_first_principles": first, "y1_closed_form": displayed},
            variants=variants,
            chosen_scale=params.noise.scale,
            closed_form_scale=variants["closed_form"],
        )
        if not math.isclose(first, displayed, rel_tol=1e-12):
            report.flags.append("l1 sensitivity: first-principles product differs from the "
                                "displayed closed form; the larger one is used")
        return report

    delta = privacy.delta if delta is None else delta
    delta0 = delta / (2.0 * math.sqrt(params.T))
    y2 = sensitivity_l2_highprob(params, delta0)
    variants = gaussian_variants(params, eps, delta)
    report = CalibrationReport(
        regime="approx",
        sensitivities={
            "y1_first_principles": first,
            "y1_closed_form": displayed,
            "y2_conservative_delta": y2.conservative,
            "y2_per_term_delta": y2.per_term_delta,
            "y2_worst_case": sensitivity_l2_worst_case(params),
            "y2_failure_prob": delta0,
        },
        variants=variants,
        chosen_scale=params.noise.scale,
        closed_form_scale=variants["closed_form"],
    )
    if params.T_b > 1:
        report.flags.append("l2 sensitivity: Delta = sqrt(T_b)*M_F and Delta = M_F disagree; "
                            "both carried, the larger noise is used")
    report.flags.append("gaussian log factor: the tree calibration uses ln(ln T/delta), the closed "
                        "form uses ln(T/delta); both evaluated")
    return report


def _ratio_statistic(a: np.ndarray, b: np.ndarray, bins: int, min_count: int) -> float:
    pooled = np.concatenate([a, b])
    edges = np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    edges = np.unique(edges)
    ca = np.histogram(a, edges)[0].astype(float)
    cb = np.histogram(b, edges)[0].astype(float)
    ok = (ca >= min_count) & (cb >= min_count)
    if not np.any(ok):
        raise ValueError("no bin has enough samples; increase trials")
    pa = ca[ok] / a.size
    pb = cb[ok] / b.size
    return float(np.max(np.abs(np.log(pa / pb))))


def empirical_dp_test(T: int, epsilon: float, y1: float, trials: int, src: RandomSource,
                      *, scale: float | None = None, identical: bool = False,
                      bins: int = 50, min_count: int = 100) -> float:
    """Estimate the privacy loss of the final release of the Laplace tree mechanism.

    Two scalar streams (all zeros, and the same with element 1 raised by ``y1``)
    are fed to ``trials`` independent copies of the mechanism with scale
    ``y1 * ln(T) / epsilon`` (or ``scale`` if given). The final releases are
    pooled into ``bins`` equal-probability bins; the result is the largest
    ``|log(p/p')|`` over bins where both sides have ``min_count`` samples;
    if no bin qualifies, the bin count is halved until one does.

    The two streams draw from independent children of ``src``. Calls that share
    ``src`` but differ in scale consume identical uniforms (common random numbers).
    """
    if T < 2:
        raise ValueError("need T >= 2")
    lam = calibrate_laplace(y1, T, epsilon) if scale is None else scale
    noise = NoiseSpec.laplace(lam, 1)
    bump = 0.0 if identical else y1
    finals = []
    for label, first in (("base", 0.0), ("neighbor", bump)):
        agg = TreeAggregator(T, noise, src.child(label), batch=trials)
        release = None
        for t in range(1, T + 1):
            release = agg.add_and_release(np.array([first if t == 1 else 0.0]), t)
        finals.append(release[:, 0])
    while True:
        try:
            return _ratio_statistic(finals[0], finals[1], bins, min_count)
        except ValueError:
            if bins <= 2:
                raise
            bins //= 2
            log.warning("too few samples per bin; widening to %d bins", bins)
