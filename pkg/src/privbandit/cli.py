"""Config-driven experiment runner.

    privbandit run   --config exp.json [--seed N] [--out DIR]
    privbandit sweep --config exp.json [--seed N] [--out DIR] [--jobs K]
    privbandit audit --config exp.json [--seed N] [--out DIR]

The config is one JSON document (see README). Floats are written with 17
significant digits so every file round-trips exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from privbandit import bench_audit, private_bandit, privacy_audit
from privbandit.geometry import DecisionSet, domain_from_config
from privbandit.randomness import NoiseSpec, RandomSource
from privbandit.tree_agg import TreeAggregator, tree_depth

log = logging.getLogger("privbandit")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # repr of a Python float is the shortest exact round-trip form.
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ExperimentConfig:
    domain: DecisionSet
    adversary: bench_audit.AdversarySpec
    T: int
    requested_T: int
    L: float
    D: float
    privacy: private_bandit.Privacy
    seeds: int
    seed: int
    feasibility_mode: str
    out: str
    T_grid: list = field(default_factory=list)
    synthetic: dict | None = None
    audit: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.domain.dimension

    def echo(self) -> dict:
        return {
            "domain": self.domain.to_config(),
            "adversary": self.adversary.to_config(),
            "T": self.T, "requested_T": self.requested_T, "T_grid": list(self.T_grid),
            "n": self.n, "L": self.L, "D": self.D,
            "privacy": self.privacy.to_dict(),
            "seeds": self.seeds, "seed": self.seed,
            "feasibility_mode": self.feasibility_mode,
        }


def parse_config(raw: dict, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Validate a config document; raises ConfigError with a readable message."""
    try:
        domain = domain_from_config(raw["domain"])
        adversary = bench_audit.AdversarySpec.from_config(raw.get("adversary", {}))
        requested = int(raw.get("T", 0) or 0)
        grid = [int(t) for t in raw.get("T_grid", [])]
        if requested < 1 and not grid:
            raise ConfigError("config needs a horizon T (or a T_grid for sweeps)")
        T = private_bandit.round_to_square(requested) if requested >= 1 else 0
        if requested >= 1 and T < 4:
            raise ConfigError("T must be at least 4")
        L = float(raw.get("L", 1.0))
        D = float(raw["D"]) if raw.get("D") is not None else domain.diameter
        p = raw.get("privacy", {}) or {}
        privacy = private_bandit.Privacy(p.get("mode", "none"), p.get("epsilon"), p.get("delta"))
        cfg = ExperimentConfig(
            domain=domain, adversary=adversary, T=T, requested_T=requested, L=L, D=D,
            privacy=privacy, seeds=int(raw.get("seeds", 1)),
            seed=int(raw.get("seed", 0) if seed is None else seed),
            feasibility_mode=raw.get("feasibility_mode", private_bandit.ENLARGED),
            out=out or raw.get("out", "out"), T_grid=grid,
            synthetic=raw.get("synthetic"), audit=dict(raw.get("audit", {})),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid config: {err}") from None
    if cfg.seeds < 1:
        raise ConfigError("seeds must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    for T in [cfg.T] * bool(cfg.T) + cfg.T_grid:
        try:
            private_bandit.schedule(T, cfg.n, cfg.L, cfg.D, cfg.privacy, cfg.feasibility_mode,
                                    cfg.domain.inner_radius)
        except ValueError as err:
            raise ConfigError(f"T={T}: {err}") from None
    if cfg.adversary.kind == bench_audit.QUADRATIC and not (
            cfg.adversary.centers or cfg.adversary.random_centers):
        raise ConfigError("quadratic adversary needs centers or random_centers")
    return cfg


def load_config(path: str, seed=None, out=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(raw, seed, out)


def experiment_source(cfg: ExperimentConfig, index: int, T: int | None = None) -> RandomSource:
    """Stream for experiment ``index`` (and horizon ``T`` in sweeps) under the master seed."""
    src = RandomSource(cfg.seed).child("experiment", index)
    return src if T is None else src.child("horizon", T)


def run_once(cfg: ExperimentConfig, T: int, index: int, grid: bool = False):
    src = experiment_source(cfg, index, T if grid else None)
    return bench_audit.run_experiment(cfg.domain, cfg.adversary, T, cfg.L, cfg.privacy, src,
                                      cfg.feasibility_mode, cfg.D)


def trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "round", "loss", "cumulative_loss", "cumulative_regret"])
    cum = trace.cumulative_loss
    for i in range(trace.losses.size):
        w.writerow([i + 1, int(trace.rounds[i]), fmt(trace.losses[i]), fmt(cum[i]),
                    fmt(trace.cumulative_regret[i])])
    return buf.getvalue()


def run_single(cfg: ExperimentConfig) -> dict:
    start = time.perf_counter()
    trace, comp, params = run_once(cfg, cfg.T, 0)
    final = float(trace.cumulative_regret[-1])
    summary = {
        "config": cfg.echo(),
        "params": params.to_dict(),
        "final_regret": final,
        "total_loss": trace.total_loss,
        "comparator": comp.to_dict(),
        "calibration": privacy_audit.calibration_report(params).to_dict(),
        "noise_draws": trace.noise_draws,
        "lmo_calls": trace.lmo_calls,
        "loss_queries": trace.loss_queries,
        "wall_time_s": time.perf_counter() - start,
    }
    write_atomic(os.path.join(cfg.out, "trace.csv"), trace_csv(trace))
    write_atomic(os.path.join(cfg.out, "summary.json"), dumps(summary))
    note = f" (requested {cfg.requested_T})" if cfg.requested_T != cfg.T else ""
    print(f"run: T={cfg.T}{note} n={cfg.n} privacy={cfg.privacy.mode} "
          f"regret={final:.6g} comparator={comp.value:.6g}")
    return summary


def _sweep_job(args):
    cfg, T, index = args
    if cfg.synthetic:
        return synthetic_regret(cfg, T, index)
    trace, _, _ = run_once(cfg, T, index, grid=True)
    return float(trace.cumulative_regret[-1])


def synthetic_regret(cfg: ExperimentConfig, T: int, index: int) -> float:
    """Injected power law ``scale * T^exponent`` with optional multiplicative jitter."""
    syn = cfg.synthetic
    value = float(syn.get("scale", 1.0)) * T ** float(syn["exponent"])
    jitter = float(syn.get("jitter", 0.0))
    if jitter:
        value *= 1.0 + jitter * experiment_source(cfg, index, T).generator.standard_normal()
    return value


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    grid = cfg.T_grid
    if len(grid) < 4:
        raise ConfigError(f"a sweep needs a T_grid of at least 4 perfect squares, got {grid}")
    for T in grid:
        if math.isqrt(T) ** 2 != T:
            raise ConfigError(f"T_grid entry {T} is not a perfect square")
    tasks = [(cfg, T, s) for T in grid for s in range(cfg.seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    samples = {T: np.array(results[i * cfg.seeds:(i + 1) * cfg.seeds]) for i, T in enumerate(grid)}
    try:
        fit = bench_audit.fit_exponent(grid, None, cfg.seeds, RandomSource(cfg.seed),
                                       samples=samples)
    except ValueError as err:
        raise ConfigError(str(err)) from None

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "mean_regret", "stderr"])
    for T, m, se in zip(fit.grid, fit.mean_regrets, fit.stderrs):
        w.writerow([T, fmt(m), fmt(se)])
    write_atomic(os.path.join(cfg.out, "sweep.csv"), buf.getvalue())
    fit_doc = {"slope": fit.slope, "half_width": fit.half_width, "intercept": fit.intercept,
               "seeds": cfg.seeds, "grid": fit.grid, "excluded": fit.excluded,
               "config": cfg.echo()}
    write_atomic(os.path.join(cfg.out, "fit.json"), dumps(fit_doc))
    print(f"sweep: grid={grid} seeds={cfg.seeds} slope={fit.slope:.4f} "
          f"+/- {fit.half_width:.4f}")
    return fit_doc


def noise_structure_check(T_r: int, noise: NoiseSpec, src: RandomSource) -> dict:
    """Check the tree on this run's horizon and noise law.

    Counts the random draws the real mechanism consumes, then replays it with
    one-hot tagged draws on a zero stream to confirm every release contains
    exactly ``ceil(log2 T_r)`` distinct noise vectors, and checks that a
    noiseless tree returns exact prefix sums.
    """
    depth = tree_depth(T_r)
    real = TreeAggregator(T_r, noise, src.child("count")) if (T_r > 1 or noise.is_zero) else None
    if real is not None:
        for t in range(1, T_r + 1):
            real.add_and_release(np.zeros(noise.dimension), t)
    draws = 0 if real is None else real.noise_draws

    width = 4 * T_r + (depth + 1) * (T_r + 1)
    counter = iter(range(width))

    def tagged():
        v = np.zeros(width)
        v[next(counter)] = 1.0
        return v

    tag = TreeAggregator(T_r, NoiseSpec.zero(width), sampler=tagged)
    counts = []
    structure_ok = bool(np.all(tag.initial_release <= 1) and tag.initial_release.sum() == depth)
    for t in range(1, T_r + 1):
        rel = tag.add_and_release(np.zeros(width), t)
        counts.append(int(rel.sum()))
        structure_ok &= bool(np.all(rel <= 1) and rel.sum() == depth)

    stream = np.arange(1, T_r + 1, dtype=float)
    exact = TreeAggregator(T_r, NoiseSpec.zero(1))
    exact_ok = all(exact.add_and_release([stream[t - 1]], t)[0] == stream[:t].sum()
                   for t in range(1, T_r + 1))
    return {"horizon": T_r, "depth": depth, "noise_draws": draws,
            "terms_per_release": counts, "structure_ok": structure_ok, "exactness_ok": exact_ok}


def run_audit(cfg: ExperimentConfig) -> dict:
    opts = cfg.audit
    src = RandomSource(cfg.seed).child("audit")
    params = private_bandit.schedule(cfg.T, cfg.n, cfg.L, cfg.D, cfg.privacy,
                                     cfg.feasibility_mode, cfg.domain.inner_radius)
    checks = []
    report = privacy_audit.calibration_report(params)
    checks.append({"name": "calibration_conservative", "passed": report.conservative})

    delta_c = float(opts.get("concentration_delta", 0.1))
    trials = int(opts.get("concentration_trials", 1000))
    conc = []
    for n, k in opts.get("concentration_cases", [[8, 64], [16, 16], [4, 256]]):
        rate = bench_audit.concentration_check(int(n), int(k), delta_c, 1.0, trials,
                                               src.child("concentration", int(n), int(k)))
        conc.append({"n": n, "k": k, "delta": delta_c, "trials": trials, "violation_rate": rate})
        checks.append({"name": f"concentration_n{n}_k{k}", "passed": rate <= delta_c})

    dp = None
    if cfg.privacy.mode == "pure":
        dp_T = int(opts.get("dp_T", 8))
        dp_trials = int(opts.get("dp_trials", 1_000_000))
        dp_slack = float(opts.get("dp_slack", 0.1))
        eps_hat = privacy_audit.empirical_dp_test(dp_T, cfg.privacy.epsilon, 1.0, dp_trials,
                                                  src.child("dp"))
        dp = {"T": dp_T, "epsilon": cfg.privacy.epsilon, "trials": dp_trials,
              "epsilon_hat": eps_hat, "threshold": cfg.privacy.epsilon + dp_slack}
        checks.append({"name": "empirical_dp", "passed": eps_hat <= cfg.privacy.epsilon + dp_slack})

    structure = noise_structure_check(params.T_r, params.noise, src.child("noise"))
    checks.append({"name": "noise_structure", "passed": structure["structure_ok"]})
    checks.append({"name": "zero_noise_exactness", "passed": structure["exactness_ok"]})

    doc = {
        "config": cfg.echo(),
        "params": params.to_dict(),
        "calibration": report.to_dict(),
        "concentration": conc,
        "empirical_dp": dp,
        "noise_count": structure,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    write_atomic(os.path.join(cfg.out, "audit.json"), dumps(doc))
    print(f"audit: {sum(c['passed'] for c in checks)}/{len(checks)} checks passed")
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privbandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "audit"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "run":
            if not cfg.T:
                raise ConfigError("run needs a horizon T")
            if cfg.requested_T != cfg.T:
                log.warning("T=%d is not a perfect square; using %d", cfg.requested_T, cfg.T)
            run_single(cfg)
            return 0
        if args.command == "sweep":
            run_sweep(cfg, args.jobs)
            return 0
        if not cfg.T:
            raise ConfigError("audit needs a horizon T")
        return 0 if run_audit(cfg)["passed"] else 1
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
