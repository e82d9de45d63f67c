import math

import numpy as np
import pytest
from scipy.special import erf

from pinned_string import estimators as E
from pinned_string.cli import DEFAULT_SEED as SEED
from pinned_string.kernel import STOCH_CONV_CONST, f_of


# --- intervals -----------------------------------------------------------


def test_proportion_ci():
    e = E.proportion_ci(0, 1000, 1)
    assert e.estimate == 0 and e.ci95 == (0.0, 0.003)
    e = E.proportion_ci(250, 1000, 1)
    assert e.ci95[0] < 0.25 < e.ci95[1]
    assert e.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 1000))


def test_quantile_with_se():
    x = np.random.default_rng(0).standard_normal(4000)
    q, se = E.quantile_with_se(x, 0.5)
    assert abs(q) < 4 * se and 0 < se < 0.05


# --- exact probabilities -------------------------------------------------


def test_small_ball_limits():
    assert E.small_ball_exact((1, 0), 0.0, 7) == 0.0
    assert E.small_ball_exact((1, 0), -1.0, 7) == 0.0
    assert E.small_ball_exact((1, 0), math.inf, 7) == 1.0
    assert E.small_ball_exact((0, 0), 0.3, 7) == 1.0


def test_small_ball_value():
    expected = erf(0.5 / math.sqrt(2 * f_of(0.0))) ** 7
    assert E.small_ball_exact((1, 0), 0.5, 7) == pytest.approx(expected, rel=1e-14)


def test_prop12_ratio():
    assert E.prop12_ratio((4, 1.5), 0.3, 7) == E.prop12_ratio((4, -1.5), 0.3, 7)
    assert E.prop12_ratio((1, 0), 0.5, 7) == pytest.approx(E.small_ball_exact((1, 0), 0.5, 7) / 0.5**7)
    with pytest.raises(ValueError):
        E.prop12_ratio((0, 0), 0.5, 7)


def test_prop12_sweep_matches_pointwise():
    rep = E.prop12_sweep([1.0, 7.0], [-2.0, 0.0, 3.0], [0.1, 0.9], d=7)
    assert len(rep.table) == 12
    for (t, x, dl), _, _, r in rep.table:
        assert r == pytest.approx(E.prop12_ratio((t, x), dl, 7), rel=1e-12)
    assert rep.max_ratio == max(r[3] for r in rep.table)


def test_two_point_degenerate_cases():
    assert E.two_point_exact((2, 1), (2, 1), 0.4, 0.4, 6) == pytest.approx(E.small_ball_exact((2, 1), 0.4, 6), rel=1e-9)
    assert E.two_point_exact((2, 1), (3, 0), 0.0, 0.4, 6) == 0.0


def test_two_point_independence_limit():
    # equal-time covariance stays bounded while the far variance grows linearly
    p, q = (1.0, 0.0), (1.0, 40_000.0)
    S = E.pair_cov(p, q)
    assert abs(S[0, 1]) / math.sqrt(S[0, 0] * S[1, 1]) < 0.01
    r2 = math.sqrt(S[1, 1])
    joint = E.two_point_exact(p, q, 0.5, r2, 2)
    prod = E.small_ball_exact(p, 0.5, 2) * E.small_ball_exact(q, r2, 2)
    assert joint == pytest.approx(prod, rel=0.01)


# --- bound sweeps --------------------------------------------------------


def test_sweep_single_configuration():
    rep = E.bound_ratio_sweep("lemma41", E.Sweep({"t": [2], "s": [1], "x": [1], "y": [0.5]}), alpha=1.0, delta=0.5)
    lhs, rhs = E.lemma41_terms(2, 1, 1, 0.5, 1.0, 0.5)
    assert rep.max_ratio == pytest.approx(lhs / rhs) and rep.skipped == 0


def test_sweep_skips_illegal_and_coincident():
    rep = E.bound_ratio_sweep("lemmaA1", E.Sweep({"t": [1, 3], "s": [1], "x": [0], "y": [0, 1], "d1": [0.5], "d2": [0.5]}))
    # t = 3 is illegal; (t, x) = (s, y) has an infinite right-hand side
    assert len(rep.table) == 1 and rep.skipped == 3
    with pytest.raises(ValueError):
        E.bound_ratio_sweep("lemma99", E.Sweep({"t": [1]}))


def test_sweep_refine_nests():
    s = E.Sweep({"a": [0, 1, 3], "b": [5]}).refine()
    assert s.axes == {"a": [0, 0.5, 1, 2, 3], "b": [5.0]}


def test_lemma41_bounds_positive_on_small_sweep():
    rep = E.bound_ratio_sweep("lemma41", E.Sweep({"t": [1, 4], "s": [0.5, 2], "x": [0, 2], "y": [-1, 1]}))
    assert all(r[1] > 0 and r[2] > 0 and math.isfinite(r[3]) for r in rep.table)


# --- Monte Carlo ---------------------------------------------------------


def test_mc_trivial_cases():
    e = E.mc_event_prob([(1, 0), (2, 1)], 3, math.inf, "all", 500, SEED)
    assert e.estimate == 1.0 and e.stderr == 0.0
    assert E.mc_event_prob([(1, 0)], 3, 0.0, "any", 500, SEED).estimate == 0.0
    with pytest.raises(ValueError):
        E.mc_event_prob([(1, 0)], 3, 1.0, "all", 99, SEED)
    with pytest.raises(ValueError):
        E.mc_event_prob([(1, 0)], 3, 1.0, "some", 500, SEED)


def test_mc_small_ball_d7():
    exact = E.small_ball_exact((1, 0), 0.5, 7)
    e = E.mc_event_prob([(1, 0)], 7, 0.5, "all", 100_000, SEED)
    assert abs(e.estimate - exact) <= 3 * e.stderr


def test_mc_independent_of_worker_count():
    pts = [(1, 0), (1.5, 0.5), (2, -1)]
    a = E.mc_event_prob(pts, 2, 1.0, "any", 3000, SEED, workers=1)
    b = E.mc_event_prob(pts, 2, 1.0, "any", 3000, SEED, workers=4)
    assert a.hits == b.hits


def test_mc_counts_monotone_in_radius():
    pts = [(1, 0), (2, 1), (3, -1)]
    lo, hi = E.mc_event_counts(pts, 3, [0.3, 0.6], "any", 2000, SEED)
    assert lo.hits <= hi.hits


def test_exact_and_mc_agree_on_random_configurations():
    rng = np.random.Generator(np.random.Philox(key=SEED))
    z = []
    for k in range(20):
        p = (rng.uniform(0.5, 3), rng.uniform(-2, 2))
        q = (rng.uniform(0.5, 3), rng.uniform(-2, 2))
        r1, r2 = rng.uniform(0.3, 1.5, 2)
        d = int(rng.integers(1, 3))
        if k % 2:
            exact, e = E.small_ball_exact(p, r1, d), E.mc_event_prob([p], d, r1, "all", 4000, SEED + k)
        else:
            exact, e = E.two_point_exact(p, q, r1, r2, d), E.mc_event_prob([p, q], d, [r1, r2], "all", 4000, SEED + k)
        z.append((e.estimate - exact) / e.stderr)
    assert max(abs(v) for v in z) <= 3.5
    assert abs(np.mean(z)) <= 3 / math.sqrt(20)


def test_sup_tail_basic():
    fit = E.sup_tail_fit([0.0, 0.5, 1.0, 2.0, 3.0, 9.0], 0.1, 2000, SEED)
    est = dict((d, e.estimate) for d, e in fit.table)
    assert est[0.0] == 1.0
    vals = [e.estimate for _, e in fit.table]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert 9.0 in fit.excluded and fit.c2 > 0
    with pytest.raises(ValueError):
        E.sup_tail_fit([1.0], 0.2, 200, SEED)


def test_inf_quantiles_properties():
    res = E.inf_scaled_quantiles(1.0, [1.0, 2.0], 0.05, 400, SEED, d=3)
    for qs in res.values():
        v = [q[1] for q in qs]
        assert v[0] >= 0 and all(a <= b for a, b in zip(v, v[1:]))
    assert all(b[1] <= a[1] for a, b in zip(res[1.0], res[2.0]))
    with pytest.raises(ValueError):
        E.inf_scaled_quantiles(16.0, 1.0, 0.1, 200, SEED)


def test_spatial_grid_scaling():
    g1, g16 = E.spatial_grid(1.0, 1.0, 0.25), E.spatial_grid(16.0, 1.0, 0.25)
    assert np.allclose(g16[:, 1], 4 * g1[:, 1]) and np.all(g16[:, 0] == 16.0)


def test_conditional_convolution_variance():
    v1 = E.conv_conditional_variance(1.0, 1.0, 30.0, 0.1)
    v4 = E.conv_conditional_variance(1.0, 4.0, 30.0, 0.1)
    assert v1 == pytest.approx(STOCH_CONV_CONST, rel=0.05)
    assert v4 == pytest.approx(2 * STOCH_CONV_CONST, rel=0.05)
    assert E.conv_conditional_variance(1.0, 1.0, 30.0, 0.2) >= v1
    with pytest.raises(ValueError):
        E.conv_conditional_variance(1.0, 1.0, 30.0, 0.3)
    with pytest.raises(ValueError):
        E.conv_conditional_variance(1.0, 16.0, 30.0, 0.1)
