import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinned_string import constructions as C


# --- t_n -----------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.125, 0.2, 0.24])
def test_t2_is_two(alpha):
    assert C.tn_sequence(alpha, 3).t(2) == 2.0


def test_tn_eighth():
    tn = C.tn_sequence(0.125, 100_000)
    assert tn.t(3) == pytest.approx(2 + math.sqrt(2), abs=1e-12)
    assert tn.r == 2.0 and tn.c == 1 / 16
    n = np.arange(1, 100_001)
    assert np.all(tn.values >= n**2 / 16)


@pytest.mark.parametrize("alpha", [0.05, 0.125, 0.2, 0.24])
def test_tn_bounds(alpha):
    tn = C.tn_sequence(alpha, 20_000)
    assert tn.lower_bound_holds and tn.ratio_holds


@pytest.mark.parametrize("alpha", [0.0, 0.25, -0.1])
def test_tn_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        C.tn_sequence(alpha, 10)


# --- grids ---------------------------------------------------------------


def test_grid_examples():
    g = C.grid_points(0.125, 7, 1, 0)
    assert g.m == 1 and g.corner_points().tolist() == [[2.0, 1.0]]
    assert C.grid_points(0.125, 7, 100, 5).m == 1
    assert int(C.m_of(100, 5, 7)) == math.floor(15 ** (7 / 6 - 1.1))
    with pytest.raises(ValueError):
        C.grid_points(0.125, 6, 1, 0)


@pytest.mark.parametrize("n,k", [(1, 0), (3, 2), (9, 1)])
def test_grid_partition(n, k):
    g = C.grid_points(0.2, 24, n, k)
    R = g.sub_rectangles()
    assert len(R) == g.m**3
    assert np.all(R[:, 0] >= g.t_lo - 1e-9) and np.all(R[:, 1] <= g.t_hi + 1e-9)
    assert np.all(R[:, 2] >= g.x_lo - 1e-9) and np.all(R[:, 3] <= g.x_hi + 1e-9)
    area = np.sum((R[:, 1] - R[:, 0]) * (R[:, 3] - R[:, 2]))
    assert area == pytest.approx((g.t_hi - g.t_lo) * (g.x_hi - g.x_lo), rel=1e-9)
    # distinct lower-left corners: no overlap beyond shared edges
    assert len({(round(a, 9), round(c, 9)) for a, _, c, _ in R}) == len(R)


def test_per_term_bound_frozen_constant():
    tn = C.tn_sequence(0.125, 600)
    small = max(C.per_term_ratio(0.125, 7, n, k, tn) for n in range(1, 51) for k in range(11))
    assert small <= C.PER_TERM_C
    large = max(C.per_term_ratio(0.125, 7, n, k, tn) for n in range(1, 501, 7) for k in range(0, 101, 3))
    assert large <= C.PER_TERM_C


# --- partial sums --------------------------------------------------------


def test_partial_sum_single_cell():
    s = C.grid_bound_partial_sum("smallball", 0.125, 7, 0.5, 1, 0)
    assert s.total == pytest.approx(0.5**7 * 1**3 * 1.0 ** (-3.5))
    s = C.grid_bound_partial_sum("smallball", 0.125, 7, 0.5, 1, 1)
    assert s.total == pytest.approx(0.5**7 * (1 + 2 ** (-3.5)))


def test_partial_sums_monotone():
    a = C.grid_bound_partial_sum("smallball", 0.125, 8, 1.0, 50, 50)
    b = C.grid_bound_partial_sum("smallball", 0.125, 8, 1.0, 100, 60)
    assert b.total >= a.total and b.majorant_total >= a.majorant_total
    assert np.all(a.terms <= a.majorant * (1 + 1e-12))


def test_oscillation_terms_vanish():
    s = C.grid_bound_partial_sum("oscillation", 0.125, 24, 1.0, 400, 400, c2=0.3)
    assert s.terms[-1, -1] < 1e-50 and s.terms.max() < np.inf
    with pytest.raises(ValueError):
        C.grid_bound_partial_sum("other", 0.125, 7, 1.0, 2, 2)


# --- lattice -------------------------------------------------------------


def test_lattice_n2():
    lat = C.lattice_points(2, 1 / 6)
    assert lat.r == 4 and lat.k == 0.5
    assert np.allclose(lat.times, 2 + np.sqrt(np.arange(5)))
    j0 = lat.index[lat.index[:, 0] == 0, 1]
    assert j0.tolist() == list(range(int(math.sqrt(2)) + 1))


@pytest.mark.parametrize("N", [3, 5, 8])
def test_lattice_times_in_range(N):
    lat = C.lattice_points(N, 1 / 6)
    assert lat.points[:, 0].min() >= N and lat.points[:, 0].max() <= N * N + 1e-9
    assert C.lattice_size(N, 1 / 6) == len(lat.points)


def test_lattice_cap():
    with pytest.raises(C.LatticeTooLarge):
        C.lattice_points(100, 1 / 6)
    with pytest.raises(C.LatticeTooLarge):
        C.lattice_points(3, 1.0)


def test_first_order():
    assert C.first_order_integral(1, 1 / 6) == 0.0
    assert C.first_order_closed_form(10) == pytest.approx(math.log(10) - 0.9, abs=1e-12)
    assert C.first_order_closed_form(10) == pytest.approx(1.402585, abs=1e-6)
    for N in (10, 100, 1000):
        assert abs(C.first_order_integral(N, 1 / 6) - C.first_order_closed_form(N)) <= 1e-6
    ratios = [C.first_order_closed_form(N) / math.log(N) for N in (10, 100, 1000, 10_000)]
    assert all(0.3 <= r <= 1 for r in ratios) and ratios == sorted(ratios)
    s, integral = C.first_order_sum(10, 1 / 6)
    assert 0.3 <= s / integral <= 3


# --- inequalities --------------------------------------------------------


def test_lemma42_example():
    r = C.lemma42_margin(1, 2)
    assert r.lhs == pytest.approx(899.1, rel=1e-3)
    assert r.bound == pytest.approx(2**16 / (4 ** (1 / 7) - 1), rel=1e-12)
    assert r.bound == pytest.approx(2.99e5, rel=1e-2) and r.holds


def test_lemma42_against_high_precision():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 60
    for a, N in [(1, 2), (2, 17), (3, 400)]:
        K = 6 * a + 1
        ref = 1 / mpmath.expm1(mpmath.log1p(mpmath.mpf(N * N - N) ** (-K)) / K)
        assert C.lemma42_margin(a, N).log_lhs == pytest.approx(float(mpmath.log(ref)), rel=1e-12)


def test_lemma42_sweep_and_growth():
    for a in (1, 2, 3):
        res = [C.lemma42_margin(a, N) for N in range(2, 1001)]
        assert all(r.holds for r in res)
        logs = [r.log_lhs for r in res]
        assert logs == sorted(logs)
    with pytest.raises(ValueError):
        C.lemma42_margin(1.5, 3)


def test_union_bound_examples():
    assert C.union_lower_bound([0.3], [[0.3]]) == pytest.approx(0.3)
    assert C.union_lower_bound([0.25, 0.25], np.zeros((2, 2))) == pytest.approx(0.5)
    assert C.union_lower_bound([0.0, 0.0], np.zeros((2, 2))) == 0.0
    with pytest.raises(ValueError):
        C.union_lower_bound([0.1, 0.2], [[0.1, 0.15], [0.15, 0.2]])


def test_union_bound_brute_force():
    trials = C.lemma43_trials(1000, 5)
    assert len(trials) == 1000
    assert all(r["holds"] for r in trials)
    assert all(r["tight"] for r in trials)
    assert sum(r["disjoint"] for r in trials) >= 100


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_union_bound_property(seed):
    rng = np.random.default_rng(seed)
    w, ev = C.random_event_space(rng)
    p, q, union = C.brute_force_union(w, ev)
    assert C.union_lower_bound(p, q) <= union + 1e-12
