"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they happen
(they are also repeated in the terminal summary), or directly with
``python tests/test_acceptance.py``.
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from oracles import prefix_sums, project_l2_ball
from privbandit import cli
from privbandit.bench_audit import AdversarySpec, concentration_check, run_experiment
from privbandit.frank_wolfe import QuadraticTarget, solve
from privbandit.geometry import L2Ball
from privbandit.noisy_oco import (NoisyGradOracle, NoisyMapOracle, exact_mirror_map,
                                  regret_bound, run)
from privbandit.private_bandit import Privacy
from privbandit.privacy_audit import empirical_dp_test
from privbandit.randomness import NoiseSpec, RandomSource, sample_sphere
from privbandit.smoothing import LossOracle, linear_loss, one_point_gradients, smoothed_value
from privbandit.tree_agg import TreeAggregator, tree_depth

RESULTS = {}


def criterion(number, title, budget_s):
    """Time ``body() -> (ok, detail)``, record and print the verdict, then assert it."""
    def wrap(body):
        def test(*args, **kwargs):
            start = time.perf_counter()
            try:
                ok, detail = body(*args, **kwargs)
            except Exception as err:  # a crash is a failure of the criterion
                ok, detail = False, f"raised {type(err).__name__}: {err}"
            elapsed = time.perf_counter() - start
            if elapsed >= budget_s:
                ok, detail = False, f"{detail}; over the {budget_s:g} s budget"
            line = (f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail} "
                    f"({elapsed:.2f} s)")
            RESULTS[number] = line
            print(line)
            assert ok, line
        test.__name__ = body.__name__
        test.__doc__ = body.__doc__
        return test
    return wrap


@criterion(1, "tree exactness", budget_s=1.0)
def test_criterion_01_tree_exactness():
    rng = np.random.default_rng(1)
    checked = []
    for T in (1, 2, 4, 8, 16, 31, 32):
        stream = rng.integers(-1000, 1000, size=(T, 3))
        agg = TreeAggregator(T, NoiseSpec.zero(3))
        got = [agg.add_and_release(row, t) for t, row in enumerate(stream, start=1)]
        want = prefix_sums([row.astype(float) for row in stream])
        checked.append(all(np.array_equal(a, b) for a, b in zip(got, want)))
    return all(checked), f"bitwise prefix sums for T in {{1,2,4,8,16,31,32}}: {checked}"


def _tagged(width):
    counter = iter(range(width))

    def draw():
        v = np.zeros(width)
        v[next(counter)] = 1.0
        return v
    return draw


@criterion(2, "noise-count structure", budget_s=10.0)
def test_criterion_02_noise_count():
    counts = {}
    ok = True
    for T in (4, 8, 16):
        width = 4 * T + (tree_depth(T) + 1) * (T + 1)
        agg = TreeAggregator(T, NoiseSpec.zero(width), sampler=_tagged(width))
        releases = [agg.initial_release]
        releases += [agg.add_and_release(np.zeros(width), t) for t in range(1, T + 1)]
        terms = [int(r.sum()) for r in releases]
        ok &= all(set(np.unique(r)) <= {0.0, 1.0} for r in releases)
        ok &= all(k == math.ceil(math.log2(T)) for k in terms)
        counts[T] = sorted(set(terms))
    return ok, f"distinct draws per release {counts} (expected ceil(log2 T))"


@criterion(3, "Frank-Wolfe rate", budget_s=1.0)
def test_criterion_03_frank_wolfe():
    dom = L2Ball(4)
    D = dom.diameter
    worst = 0.0
    ok = True
    for v in ([3.0, -1.0, 0.5, 2.0], [0.2, 0.1, -0.3, 0.0], [0.0, 0.0, 0.0, 5.0]):
        target = QuadraticTarget(np.array(v), dom)
        x_star = project_l2_ball(v)
        for k in (10, 100, 1000):
            gap = target.value(solve(target, k).point) - target.value(x_star)
            ok &= gap <= 10 * D**2 / k
            worst = max(worst, gap / (10 * D**2 / k))
    return ok, f"largest gap / (10 D^2/k) = {worst:.3g} over k in {{10,100,1000}}"


@criterion(4, "estimator unbiasedness", budget_s=10.0)
def test_criterion_04_unbiasedness():
    src = RandomSource(4)
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in (2, 8):
        for i in range(5):
            c = rng.standard_normal(n)
            f = linear_loss(c, offset=float(rng.uniform(0, 2)))
            x = rng.uniform(-0.5, 0.5, n)
            dirs = sample_sphere(src.child(n, i), n, size=100_000)
            g = one_point_gradients(f, x, 0.5, dirs)
            se = g.std(axis=0, ddof=1) / math.sqrt(g.shape[0])
            worst = max(worst, float(np.max(np.abs(g.mean(axis=0) - c) / se)))
    return worst <= 4.0, f"largest |mean - grad| / stderr = {worst:.2f} (limit 4)"


def _piecewise_linear(n, rng):
    A = rng.standard_normal((4, n))
    b = rng.standard_normal(4)
    L = float(np.linalg.norm(A, axis=1).max())
    return LossOracle(lambda x: float(np.max(A @ x + b)), L, n,
                      batch_value=lambda xs: np.max(xs @ A.T + b, axis=1))


@criterion(5, "smoothing bias", budget_s=10.0)
def test_criterion_05_smoothing_bias():
    src = RandomSource(5)
    rng = np.random.default_rng(5)
    worst = 0.0
    delta = 0.3
    for i in range(10):
        n = 2 + i % 3
        f = _piecewise_linear(n, rng)
        x = rng.uniform(-1, 1, n)
        est, se = smoothed_value(f, x, delta, 100_000, src.child(i))
        worst = max(worst, abs(est - f(x)) / (delta * f.lipschitz + 3 * se))
    return worst <= 1.0, f"largest |fhat - f| / (delta L + 3 stderr) = {worst:.3f} (limit 1)"


@criterion(6, "non-private regret exponent", budget_s=300.0)
def test_criterion_06_regret_exponent():
    out = _tmpdir("sweep")
    cfg = cli.parse_config({
        "domain": {"kind": "l2_ball", "n": 4},
        "adversary": {"kind": "fixed_linear", "c": [1.0, 0.0, 0.0, 0.0]},
        "T_grid": [64, 256, 1024, 4096], "L": 1.0, "privacy": {"mode": "none"},
        "seeds": 20, "seed": 6,
    }, out=str(out))
    fit = cli.run_sweep(cfg)
    return fit["slope"] <= 0.85, (f"slope {fit['slope']:.3f} +/- {fit['half_width']:.3f} "
                                  f"(limit 0.85)")


@criterion(7, "noisy OCO regret bound", budget_s=60.0)
def test_criterion_07_noisy_oco():
    dom = L2Ball(3)
    d_omega = 0.5  # omega*(0) + omega(x*) = 1/2 = 2 d^2 on the unit ball
    sigma = 1.5
    src = RandomSource(7)
    ratios = {}
    for T in (64, 256, 1024):
        cs = sample_sphere(src.child("losses", T), 3, size=T)
        kappa = math.sqrt(1.0 + sigma**2)  # E||c + sigma u||^2 = ||c||^2 + sigma^2
        total = cs.sum(axis=0)
        comp = -total / np.linalg.norm(total)
        regrets = []
        for s in range(20):
            noise = src.child("grad", T, s)
            grad = NoisyGradOracle(lambda t, x: cs[t - 1] + sigma * sample_sphere(noise, 3), kappa)
            mapper = NoisyMapOracle(lambda y: exact_mirror_map(dom, y), 3)
            trace = run(T, d_omega, grad, mapper,
                        losses=[lambda x, c=c: float(c @ x) for c in cs], comparator=comp)
            regrets.append(trace.regret)
        ratios[T] = float(np.mean(regrets)) / regret_bound(T, kappa, 0.0, d_omega)
    ok = all(r <= 1.0 for r in ratios.values())
    return ok, "mean regret / bound " + ", ".join(f"T={T}: {r:.3f}" for T, r in ratios.items())


@criterion(8, "concentration", budget_s=60.0)
def test_criterion_08_concentration():
    src = RandomSource(8)
    rates = {(n, k): concentration_check(n, k, 0.1, 1.0, 1000, src.child(n, k))
             for n, k in ((8, 64), (16, 16), (4, 256))}
    return all(r <= 0.1 for r in rates.values()), f"violation rates {rates} (limit 0.1)"


@criterion(9, "Laplace calibration and empirical DP", budget_s=60.0)
def test_criterion_09_empirical_dp():
    eps_hat = empirical_dp_test(8, 0.5, 1.0, 1_000_000, RandomSource(9))
    return eps_hat <= 0.6, f"epsilon_hat {eps_hat:.4f} at epsilon 0.5 (limit 0.6)"


@criterion(10, "private-run sanity", budget_s=300.0)
def test_criterion_10_private_sanity():
    dom = L2Ball(4)
    spec = AdversarySpec("fixed_linear", directions=[[1.0, 0.0, 0.0, 0.0]])

    def mean_regret(privacy):
        values = [run_experiment(dom, spec, 1024, 1.0, privacy, RandomSource(s))[0]
                  .cumulative_regret[-1] for s in range(20)]
        return float(np.mean(values)), all(math.isfinite(v) for v in values)

    base, _ = mean_regret(Privacy())
    private = {eps: mean_regret(Privacy.pure(eps)) for eps in (1.0, 2.0, 4.0)}
    excess = {eps: m - base for eps, (m, _) in private.items()}
    finite = all(fin for _, fin in private.values())
    ok = finite and excess[1.0] > 0 and excess[1.0] > excess[2.0] > excess[4.0]
    return ok, (f"zero-noise mean {base:.1f}; excess at eps 1/2/4 = "
                + "/".join(f"{excess[e]:.1f}" for e in (1.0, 2.0, 4.0)))


@criterion(11, "determinism", budget_s=30.0)
def test_criterion_11_determinism():
    out = _tmpdir("determinism")
    config = out / "config.json"
    config.write_text(json.dumps({
        "domain": {"kind": "simplex", "n": 3},
        "adversary": {"kind": "quadratic", "random_centers": 3},
        "T": 256, "L": 1.0, "privacy": {"mode": "approx", "epsilon": 1.0, "delta": 1e-5},
    }))
    for name in ("a", "b"):
        code = cli.main(["run", "--config", str(config), "--seed", "2024", "--out", str(out / name)])
        if code != 0:
            return False, f"run exited with {code}"
    same = (out / "a" / "trace.csv").read_bytes() == (out / "b" / "trace.csv").read_bytes()
    return same, "trace.csv byte-identical across two runs" if same else "trace.csv differs"


def _tmpdir(label):
    return Path(tempfile.mkdtemp(prefix=f"acceptance-{label}-"))


if __name__ == "__main__":
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
