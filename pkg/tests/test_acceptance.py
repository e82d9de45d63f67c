"""Acceptance criteria, one test each, at the stated tolerances.

Every test records its sub-checks through the ``criterion`` fixture, which
prints a PASS/FAIL line per criterion in the terminal summary, and then
asserts the overall verdict.
"""

import math
import time

import numpy as np
import pytest
from scipy import optimize, stats

from pinned_string import constructions as C
from pinned_string import estimators as E
from pinned_string import kernel as K
from pinned_string import sampler as S
from pinned_string import spde as P
from pinned_string.cli import DEFAULT_SEED

SEED = DEFAULT_SEED


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_ac01_equal_time_law(criterion):
    rng = np.random.Generator(np.random.Philox(key=SEED))
    with Timer() as clock:
        t = rng.uniform(0, 100, 10_000)
        x, y = rng.uniform(-50, 50, (2, 10_000))
        err = max(abs(K.sq_dist((ti, xi), (ti, yi)) - abs(xi - yi)) for ti, xi, yi in zip(t, x, y))
    assert criterion(1, "equal-time law |x-y| over 10^4 random triples", [
        ("max error <= 1e-9", err <= 1e-9, err),
        ("runtime < 1 s", clock.seconds < 1.0, round(clock.seconds, 3)),
    ])


def test_ac02_f_validation(criterion):
    with Timer() as clock:
        diffs = [abs(float(K.f_of(a)) - K.f_of_quadrature(a)) for a in (0, 0.5, 1, 2, 5, 10)]
        grid = np.linspace(0, 100, 100_001)
        fmin = float(K.f_of(grid).min())
        ratio10 = float(K.f_of(10.0)) / 10.0
    assert criterion(2, "variance function against quadrature oracle", [
        ("closed form vs quadrature <= 1e-6", max(diffs) <= 1e-6, max(diffs)),
        ("F >= 0.398942 on [0, 100]", fmin >= 0.398942, fmin),
        ("F(10)/10 in [0.95, 1]", 0.95 <= ratio10 <= 1.0, repr(ratio10)),
        ("runtime < 10 s", clock.seconds < 10.0, round(clock.seconds, 3)),
    ])


def test_ac03_two_sided_bound(criterion):
    rng = np.random.Generator(np.random.Philox(key=SEED + 3))
    with Timer() as clock:
        res = optimize.minimize_scalar(lambda a: float(K.f_of(a)) / (1 + a), bounds=(0, 20), method="bounded",
                                       options={"xatol": 1e-10})
        t1, t2 = rng.uniform(0, 16, (2, 10_000))
        x1, x2 = rng.uniform(-8, 8, (2, 10_000))
        sep = np.abs(x1 - x2) + np.sqrt(np.abs(t1 - t2))
        r = np.array([K.sq_dist((a, b), (c, d)) for a, b, c, d in zip(t1, x1, t2, x2)]) / sep
    assert criterion(3, "two-sided bound over 10^4 space-time pairs", [
        ("pre-computed min F(a)/(1+a) ~ 0.50 (within 0.05)", abs(res.fun - 0.50) <= 0.05,
         f"{res.fun:.6f} at a={res.x:.4f}"),
        ("floor 0.40 below the pre-computed minimum", res.fun >= 0.40, round(res.fun, 6)),
        ("ratio in [0.40, 2.0]", r.min() >= 0.40 and r.max() <= 2.0, (round(float(r.min()), 6), round(float(r.max()), 6))),
        ("runtime < 5 s", clock.seconds < 5.0, round(clock.seconds, 3)),
    ])


def test_ac04_scaling_identity(criterion):
    rng = np.random.Generator(np.random.Philox(key=SEED + 4))
    worst = {}
    for L in (0.5, 2.0, 10.0):
        pts = np.column_stack([rng.uniform(0, 4, 20), rng.uniform(-4, 4, 20)])
        diff = K.cov_matrix(S.scale_points(pts, L)).entries - L**2 * K.cov_matrix(pts).entries
        worst[L] = float(np.abs(diff).max())
    assert criterion(4, "scaling identity cov(scaled) = L^2 cov", [
        (f"L={L}: max err <= 1e-9 L^2", err <= 1e-9 * L**2, err) for L, err in worst.items()
    ])


def test_ac05_sampler_fidelity(criterion):
    with Timer() as clock:
        v = S.sample_replicates([(1.0, 0.0)], 1, SEED, 100_000)[:, 0, 0]
        var = float(np.var(v, ddof=1))
        ks = stats.kstest(v, "norm", args=(0.0, math.sqrt(K.f_of(0.0))))
    se = lambda target: target * math.sqrt(2 / (v.size - 1))
    f0 = float(K.f_of(0.0))
    assert criterion(5, "sampler variance and normality at (1, 0)", [
        ("variance within 3 se of 0.729436", abs(var - 0.729436) <= 3 * se(0.729436), round(var, 6)),
        ("variance within 3 se of F(0) as implemented", abs(var - f0) <= 3 * se(f0), (round(var, 6), round(f0, 6))),
        ("KS normality p >= 0.01", ks.pvalue >= 0.01, round(ks.pvalue, 4)),
        ("runtime < 60 s", clock.seconds < 60.0, round(clock.seconds, 2)),
    ])


@pytest.mark.slow
def test_ac06_spde_crosscheck(criterion):
    cfg = P.SpdeConfig(dx=0.05, dt=0.001, X=20.0, T=1.0, d=1, boundary="periodic", seed=SEED)
    with Timer() as clock:
        trajs = P.simulate(cfg, [1.0], replicates=200)
        checks = []
        for h in (0.5, 1.0, 1.5, 2.0):
            mean, _ = P.increment_variance(trajs, 0, 0, int(round(h / cfg.dx)), guard=5.0)
            rel = mean / h - 1.0
            checks.append((f"|x-y|={h}: within 10%", abs(rel) <= 0.10, f"{rel:+.4f}"))
    checks.append(("runtime < 600 s", clock.seconds < 600.0, round(clock.seconds, 2)))
    assert criterion(6, "finite-difference increments against |x-y|", checks)


def test_ac07_prop12(criterion):
    with Timer() as clock:
        rep = E.prop12_sweep(np.linspace(1, 100, 100), np.linspace(-10, 10, 81), np.linspace(0.01, 1, 100), d=7)
    assert criterion(7, "small-ball ratio ceiling over the sweep", [
        ("max ratio <= 3", rep.max_ratio <= 3.0, f"{rep.max_ratio:.4f} at {rep.argmax}"),
        ("runtime < 5 s", clock.seconds < 5.0, round(clock.seconds, 3)),
    ])


LEMMA41_AXES = {"t": [1, 2, 4, 8, 16], "s": [0, 0.5, 1, 2, 4, 8, 16], "x": [0, 1, 2, 4, 8],
                "y": [-8, -4, -2, -1, 0, 1, 2, 4, 8]}
LEMMAA1_AXES = {"t": [1, 1.5, 2], "s": [1, 1.5, 2], "x": [-2, -1, 0, 1, 2], "y": [-2, -1, 0, 1, 2],
                "d1": [0.1, 0.5, 0.9], "d2": [0.1, 0.5, 0.9]}


@pytest.mark.slow
def test_ac08_two_point_bounds(criterion):
    checks = []
    with Timer() as clock:
        for name, axes, kw in (("lemma41", LEMMA41_AXES, {"alpha": 1.0, "delta": 0.5}), ("lemmaA1", LEMMAA1_AXES, {})):
            sweep = E.Sweep(axes)
            a = E.bound_ratio_sweep(name, sweep, **kw)
            b = E.bound_ratio_sweep(name, sweep.refine(), **kw)
            finite = all(math.isfinite(r[3]) and r[3] > 0 for r in a.table + b.table)
            drift = abs(b.max_ratio / a.max_ratio - 1)
            checks.append((f"{name}: ratios finite", finite, f"max {a.max_ratio:.4g}"))
            checks.append((f"{name}: refinement drift < 10%", drift < 0.10, f"{drift:.4f}"))
        configs = [((1.0, 0.0), (2.0, 1.0), 0.5, 0.25), ((1.0, 0.0), (2.0, 1.0), 0.5, 0.5),
                   ((1.5, -1.0), (1.0, 1.0), 0.9, 0.5)]
        for k, (p, q, r1, r2) in enumerate(configs):
            exact = E.two_point_exact(p, q, r1, r2, 1)
            est = E.mc_event_prob([p, q], 1, [r1, r2], "all", 20_000, SEED + k)
            z = (est.estimate - exact) / est.stderr
            checks.append((f"MC spot check {k}: within 3 se", abs(z) <= 3, f"z={z:+.2f}"))
    checks.append(("runtime < 120 s", clock.seconds < 120.0, round(clock.seconds, 2)))
    assert criterion(8, "two-point bounds: finiteness, refinement stability, MC spot checks", checks)


def test_ac09_inf_quantile_scaling(criterion):
    with Timer() as clock:
        q1 = E.inf_scaled_quantiles(1.0, 1.0, 0.05, 1000, SEED, d=7)[1.0]
        q16 = E.inf_scaled_quantiles(16.0, 1.0, 0.05, 1000, SEED + 1, d=7)[1.0]
    checks = []
    for (lvl, a, sa), (_, b, sb) in zip(q1, q16):
        z = (a - b) / math.hypot(sa, sb)
        checks.append((f"level {lvl}: within 3 combined se", abs(z) <= 3, f"{a:.4f} vs {b:.4f}, z={z:+.2f}"))
    checks.append(("runtime < 300 s", clock.seconds < 300.0, round(clock.seconds, 2)))
    assert criterion(9, "scaled spatial infimum quantiles agree at t = 1 and t = 16", checks)


@pytest.mark.slow
def test_ac10_lattice_union(criterion):
    checks = []
    with Timer() as clock:
        for N in (3, 4, 5):
            lat = C.lattice_points(N, 1 / 6)
            t = lat.points[:, 0]
            lo, hi = E.mc_event_counts(lat.points, 6, [0.45 * t ** (-1 / 6), 0.9 * t ** (-1 / 6)], "any", 2000, SEED)
            checks.append((f"N={N}: estimate > 0 at delta 0.9", hi.hits > 0, f"{hi.estimate:.4f} ({lat.points.shape[0]} pts)"))
            checks.append((f"N={N}: nondecreasing in delta", lo.estimate <= hi.estimate, (lo.estimate, hi.estimate)))
    checks.append(("runtime < 600 s", clock.seconds < 600.0, round(clock.seconds, 2)))
    assert criterion(10, "d = 6 lattice union hits", checks)


def test_ac11_sup_tail(criterion):
    with Timer() as clock:
        fit = E.sup_tail_fit([1, 1.5, 2, 2.5, 3], 0.05, 20_000, SEED)
    assert criterion(11, "supremum tail fit", [
        ("c2 > 0", fit.c2 > 0, round(fit.c2, 5)),
        ("R^2 >= 0.9", fit.r_squared >= 0.9, round(fit.r_squared, 5)),
        ("runtime < 600 s", clock.seconds < 600.0, round(clock.seconds, 2)),
    ])


def test_ac12_deterministic_suite(criterion):
    checks = []
    with Timer() as clock:
        for a in (0.05, 0.125, 0.2, 0.24):
            tn = C.tn_sequence(a, 100_000)
            checks.append((f"t_n bound alpha={a}", tn.lower_bound_holds, round(tn.min_log_margin, 4)))
        l42 = all(C.lemma42_margin(a, N).holds for a in (1, 2, 3) for N in range(2, 1001))
        checks.append(("growth inequality, alpha 1..3, N 2..1000", l42, l42))
        trials = C.lemma43_trials(1000, SEED)
        checks.append(("union bound <= brute force on 10^3 spaces", all(r["holds"] for r in trials), len(trials)))
        checks.append(("equality in disjoint cases", all(r["tight"] for r in trials),
                       sum(r["disjoint"] for r in trials)))
        s1 = C.grid_bound_partial_sum("smallball", 0.125, 7, 1.0, 1000, 1000).total
        s2 = C.grid_bound_partial_sum("smallball", 0.125, 7, 1.0, 4000, 4000).total
        rel = s2 / s1 - 1
        checks.append(("partial sums (10^3 vs 4*10^3) within 2%", abs(rel) < 0.02, f"{rel:.4f}"))
        fo = max(abs(C.first_order_integral(N, 1 / 6) - (math.log(N) - 1 + 1 / N)) for N in (10, 100, 1000))
        checks.append(("first-order closed form to 1e-6", fo <= 1e-6, fo))
    checks.append(("runtime < 60 s", clock.seconds < 60.0, round(clock.seconds, 2)))
    assert criterion(12, "deterministic constructions", checks)


def test_ac13_conditional_convolution_variance(criterion):
    with Timer() as clock:
        v1 = E.conv_conditional_variance(1.0, 1.0, 30.0, 0.1)
        v4 = E.conv_conditional_variance(1.0, 4.0, 30.0, 0.1)
    c = K.STOCH_CONV_CONST
    assert criterion(13, "conditional variance of the stochastic convolution", [
        ("s=1 within 5% of 0.39894", abs(v1 / 0.39894 - 1) <= 0.05, round(v1, 6)),
        ("s=4 within 5% of 0.79789", abs(v4 / 0.79789 - 1) <= 0.05, round(v4, 6)),
        ("s=1 within 5% of C sqrt(s), C as implemented", abs(v1 / c - 1) <= 0.05, round(c, 6)),
        ("s=4 within 5% of C sqrt(s), C as implemented", abs(v4 / (2 * c) - 1) <= 0.05, round(2 * c, 6)),
        ("runtime < 60 s", clock.seconds < 60.0, round(clock.seconds, 2)),
    ])
