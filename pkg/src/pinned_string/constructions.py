"""
Deterministic machinery behind the transience and recurrence arguments:
the ``t_n`` time sequence, the space-time grids used for d >= 7, the d = 6
lattice, the bounding partial sums and the two elementary inequalities.

Index arithmetic is done in floating point with explicit floors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

LATTICE_CAP = 100_000

# Frozen constant for the per-term bound at alpha = 1/8, d = 7: the sweep
# n <= 50, k <= 10 peaks at 1.18; the k = 0 ratio tends to 1/sqrt(1 - 4 alpha)
# = sqrt(2) as n grows, so 1.5 leaves room for larger sweeps.
PER_TERM_C = 1.5


# ---------------------------------------------------------------------------
# t_n
# ---------------------------------------------------------------------------


@dataclass
class TnSequence:
    alpha: float
    values: np.ndarray  # values[n-1] = t_n
    r: float
    c: float
    lower_bound_holds: bool
    ratio_holds: bool
    min_log_margin: float  # min over n of log t_n - log(c n^r)
    min_ratio: float  # min over n of t_n / t_{n+1}

    def t(self, n: int) -> float:
        return float(self.values[n - 1])


def tn_sequence(alpha: float, nmax: int) -> TnSequence:
    """``t_1 = 1, t_{n+1} = t_n + t_n^{4 alpha}``, with the lower bound ``t_n >= c n^r`` checked.

    ``r = 1/(1 - 4 alpha)`` and ``c = (1/2)^{ceil(r) r}``; the comparison is
    made in logs since ``c`` underflows for alpha close to 1/4.
    """
    if not 0 < alpha < 0.25:
        raise ValueError("alpha must lie in (0, 1/4)")
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    vals = np.empty(nmax + 1)
    t = 1.0
    p = 4.0 * alpha
    for i in range(nmax + 1):
        vals[i] = t
        t = t + t**p
    r = 1.0 / (1.0 - 4.0 * alpha)
    log_c = math.ceil(r) * r * math.log(0.5)
    n = np.arange(1, nmax + 1)
    margin = np.log(vals[:nmax]) - (log_c + r * np.log(n))
    ratios = vals[:nmax] / vals[1:]
    return TnSequence(
        alpha=alpha,
        values=vals[:nmax],
        r=r,
        c=math.exp(log_c),
        lower_bound_holds=bool(np.all(margin >= -1e-12)),
        ratio_holds=bool(np.all(ratios >= 0.5)),
        min_log_margin=float(margin.min()),
        min_ratio=float(ratios.min()),
    )


# ---------------------------------------------------------------------------
# grids for d >= 7
# ---------------------------------------------------------------------------


def m_of(n, k, d: int):
    """``m(n, k) = floor((n^{1/2} + |k|)^{d/6 - 1.1})``."""
    base = np.sqrt(np.asarray(n, dtype=float)) + np.abs(np.asarray(k, dtype=float))
    return np.floor(base ** (d / 6.0 - 1.1)).astype(np.int64)


@dataclass
class GridSlice:
    """The rectangle ``R_{n,k} = [t_n, t_{n+1}] x [k t_n^{2a}, (k+1) t_n^{2a}]`` and its subdivision."""

    alpha: float
    d: int
    n: int
    k: int
    m: int
    t_lo: float
    t_hi: float
    x_lo: float
    x_hi: float
    times: np.ndarray  # t_{(n,k,i)}, i = 1..m^2
    xs: np.ndarray  # x_{(n,k,j)}, j = 1..m
    dt: float = field(init=False)
    dx: float = field(init=False)

    def __post_init__(self):
        self.dt = self.t_n ** (4 * self.alpha) / self.m**2
        self.dx = self.t_n ** (2 * self.alpha) / self.m

    @property
    def t_n(self) -> float:
        return self.t_lo

    def corner_points(self) -> np.ndarray:
        T, X = np.meshgrid(self.times, self.xs, indexing="ij")
        return np.column_stack([T.ravel(), X.ravel()])

    def sub_rectangles(self) -> np.ndarray:
        """Rows ``(t0, t1, x0, x1)``, each the translate with top corner at a grid point."""
        c = self.corner_points()
        return np.column_stack([c[:, 0] - self.dt, c[:, 0], c[:, 1] - self.dx, c[:, 1]])


def grid_points(alpha: float, d: int, n: int, k: int, tn: TnSequence | None = None) -> GridSlice:
    if d < 7:
        raise ValueError("grid construction requires d >= 7")
    if n < 1:
        raise ValueError("n must be >= 1")
    tn = tn if tn is not None and tn.values.size > n and tn.alpha == alpha else tn_sequence(alpha, n + 1)
    t_n, t_next = tn.t(n), tn.t(n + 1)
    m = int(m_of(n, k, d))
    w = t_n ** (2 * alpha)
    i = np.arange(1, m * m + 1)
    j = np.arange(1, m + 1)
    times = t_n + i * t_n ** (4 * alpha) / m**2
    xs = k * w + j * w / m
    return GridSlice(alpha, d, n, k, m, t_n, t_next, k * w, (k + 1) * w, times, xs)


def per_term_ratio(alpha: float, d: int, n: int, k: int, tn: TnSequence | None = None) -> float:
    """max over the slice's grid points of ``t^{2a} / (t^{1/2} + |x|)`` times ``(n^{1/2} + k)``."""
    g = grid_points(alpha, d, n, k, tn)
    c = g.corner_points()
    vals = c[:, 0] ** (2 * alpha) / (np.sqrt(c[:, 0]) + np.abs(c[:, 1]))
    return float(vals.max() * (math.sqrt(n) + abs(k)))


@dataclass
class PartialSums:
    kind: str
    nmax: int
    kmax: int
    total: float
    majorant_total: float
    terms: np.ndarray = field(repr=False)  # (nmax, kmax + 1)
    majorant: np.ndarray = field(repr=False)

    def rows(self):
        for n in range(1, self.nmax + 1):
            for k in range(self.kmax + 1):
                yield n, k, float(self.terms[n - 1, k]), float(self.majorant[n - 1, k])


def grid_bound_partial_sum(kind: str, alpha: float, d: int, delta: float, nmax: int, kmax: int,
                           c2: float = 1.0) -> PartialSums:
    """Partial sums over ``1 <= n <= nmax, 0 <= k <= kmax`` of the Borel-Cantelli bounding terms.

    ``smallball``: ``delta^d m^3 (n^{1/2} + k)^{-d/2}``, majorant
    ``delta^d (n^{1/2} + k)^{-3.3}``.
    ``oscillation``: ``m^3 exp(-c2 delta^2 m)``, majorant
    ``(n^{1/2} + k)^{d/2 - 3.3} exp(-c2 delta^2 (n^{1/2} + k)^{d/6 - 1.1})``.
    """
    if d < 7:
        raise ValueError("d must be >= 7")
    if not 0 < alpha < 0.25:
        raise ValueError("alpha must lie in (0, 1/4)")
    n = np.arange(1, nmax + 1, dtype=float)[:, None]
    k = np.arange(0, kmax + 1, dtype=float)[None, :]
    base = np.sqrt(n) + k
    m = np.floor(base ** (d / 6.0 - 1.1))
    if kind == "smallball":
        terms = delta**d * m**3 * base ** (-d / 2.0)
        major = delta**d * base**-3.3
    elif kind == "oscillation":
        terms = m**3 * np.exp(-c2 * delta**2 * m)
        major = base ** (d / 2.0 - 3.3) * np.exp(-c2 * delta**2 * base ** (d / 6.0 - 1.1))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return PartialSums(kind, nmax, kmax, float(terms.sum()), float(major.sum()), terms, major)


# ---------------------------------------------------------------------------
# d = 6 lattice
# ---------------------------------------------------------------------------


class LatticeTooLarge(ValueError):
    pass


@dataclass
class LatticeSpec:
    N: int
    alpha: float
    k: float
    r: int
    points: np.ndarray  # (time, j)
    index: np.ndarray  # (i, j)

    @property
    def times(self) -> np.ndarray:
        return np.unique(self.points[:, 0])


def lattice_size(N: int, alpha: float) -> int:
    k = 1.0 / (6 * alpha + 1)
    r = int(math.floor((N * N - N) ** (1.0 / k)))
    i = np.arange(r + 1, dtype=float)
    return int(np.sum(np.floor(np.sqrt(N + i**k)) + 1))


def lattice_points(N: int, alpha: float, cap: int = LATTICE_CAP) -> LatticeSpec:
    """Points ``(N + i^k, j)``, ``0 <= i <= r``, ``0 <= j <= (N + i^k)^{1/2}``, ``k = 1/(6 alpha + 1)``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    k = 1.0 / (6 * alpha + 1)
    r = int(math.floor((N * N - N) ** (1.0 / k)))
    if r + 1 > cap:
        raise LatticeTooLarge(f"lattice for N={N}, alpha={alpha} has more than {cap} points; use smaller alpha or N")
    i = np.arange(r + 1, dtype=float)
    times = N + i**k
    jmax = np.floor(np.sqrt(times)).astype(np.int64)
    count = int(np.sum(jmax + 1))
    if count > cap:
        raise LatticeTooLarge(f"lattice for N={N}, alpha={alpha} has {count} points > cap {cap}; use smaller alpha or N")
    ii = np.repeat(np.arange(r + 1), jmax + 1)
    jj = np.concatenate([np.arange(m + 1) for m in jmax])
    pts = np.column_stack([times[ii], jj.astype(float)])
    return LatticeSpec(N, alpha, k, r, pts, np.column_stack([ii, jj]))


def first_order_integral(N: float, alpha: float) -> float:
    """``int_N^{N^2} (1 - N/z)^{6 alpha} dz / z`` by adaptive quadrature in ``u = log z``."""
    if N <= 1:
        return 0.0
    lo, hi = math.log(N), 2.0 * math.log(N)
    f = lambda u: (-math.expm1(math.log(N) - u)) ** (6 * alpha)
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def first_order_closed_form(N: float) -> float:
    """The integral at ``6 alpha = 1``: ``log N - 1 + 1/N``."""
    return math.log(N) - 1.0 + 1.0 / N if N > 1 else 0.0


def first_order_sum(N: int, alpha: float, cap: int = LATTICE_CAP) -> tuple[float, float]:
    """(lattice sum of ``(N+i^k)^{-6a} ((N+i^k)^{1/2} + j)^{-3}``, integral)."""
    integral = first_order_integral(N, alpha)
    if N < 2:
        return 0.0, integral
    lat = lattice_points(N, alpha, cap)
    t, j = lat.points[:, 0], lat.points[:, 1]
    s = float(np.sum(t ** (-6 * alpha) * (np.sqrt(t) + j) ** -3))
    return s, integral


# ---------------------------------------------------------------------------
# elementary inequalities
# ---------------------------------------------------------------------------


@dataclass
class Lemma42:
    alpha: int
    N: int
    lhs: float
    bound: float
    log_lhs: float
    log_bound: float

    @property
    def holds(self) -> bool:
        return self.log_lhs <= self.log_bound


def lemma42_margin(alpha: int, N: int) -> Lemma42:
    """``((1 + (N^2-N)^{-K})^{1/K} - 1)^{-1}`` against ``N^{2K+2} / (4^{1/K} - 1)``, ``K = 6 alpha + 1``."""
    if int(alpha) != alpha or alpha < 1:
        raise ValueError("alpha must be a positive integer")
    if N < 2:
        raise ValueError("N must be >= 2")
    K = 6 * int(alpha) + 1
    log_x = -K * math.log(N * N - N)  # log (N^2 - N)^{-K}
    if log_x > -700:
        inner = math.expm1(math.log1p(math.exp(log_x)) / K)
        log_lhs = -math.log(inner)
    else:
        # (1 + x)^{1/K} - 1 = x/K (1 + O(x)) below double precision resolution
        log_lhs = math.log(K) - log_x
    rho = math.expm1(math.log(4.0) / K)
    log_bound = (2 * K + 2) * math.log(N) - math.log(rho)
    if max(log_lhs, log_bound) > 709:
        raise OverflowError(f"lemma42 values overflow double precision at N={N}, alpha={alpha}; compare log_lhs/log_bound")
    return Lemma42(int(alpha), int(N), math.exp(log_lhs), math.exp(log_bound), log_lhs, log_bound)


def union_lower_bound(p, q) -> float:
    """``(sum p)^2 / (sum p + 2 sum_{i<j} q_ij)``, a lower bound on P(union)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = p.size
    if q.shape != (n, n):
        raise ValueError("q must be an n x n matrix")
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.allclose(q, q.T, rtol=0, atol=1e-12):
        raise ValueError("q must be symmetric")
    iu = np.triu_indices(n, 1)
    off = q[iu]
    cap = np.minimum(p[:, None], p[None, :])[iu]
    if np.any(off < -1e-12) or np.any(off > cap + 1e-12):
        raise ValueError("pairwise intersections must satisfy 0 <= q_ij <= min(p_i, p_j)")
    s = float(p.sum())
    if s == 0.0:
        return 0.0
    return s * s / (s + 2.0 * float(off.sum()))


def random_event_space(rng: np.random.Generator, max_atoms: int = 16, max_events: int = 6):
    """A random finite probability space: atom weights and event membership matrix."""
    n_atoms = int(rng.integers(1, max_atoms + 1))
    n_events = int(rng.integers(1, max_events + 1))
    w = rng.dirichlet(np.ones(n_atoms))
    events = rng.random((n_events, n_atoms)) < rng.uniform(0.05, 0.6)
    return w, events


def brute_force_union(w: np.ndarray, events: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """(P(A_i), P(A_i & A_j), P(union)) by summing atom weights."""
    p = events.astype(float) @ w
    q = (events[:, None, :] & events[None, :, :]).astype(float) @ w
    union = min(1.0, float(w[np.any(events, axis=0)].sum()))
    return np.minimum(p, 1.0), np.minimum(q, 1.0), union


def lemma43_trials(trials: int = 1000, seed: int = 0) -> list[dict]:
    rng = np.random.Generator(np.random.Philox(key=seed))
    out = []
    for k in range(trials):
        w, ev = random_event_space(rng)
        if k % 10 == 0:
            # disjoint case: split the atoms among events
            labels = rng.integers(0, ev.shape[0] + 1, size=w.size)
            ev = np.stack([labels == e for e in range(ev.shape[0])])
        p, q, union = brute_force_union(w, ev)
        iu = np.triu_indices(p.size, 1)
        disjoint = bool(np.all(q[iu] == 0))
        lb = union_lower_bound(p, q)
        out.append({"trial": k, "events": int(p.size), "atoms": int(w.size), "bound": lb, "union": union,
                    "disjoint": disjoint, "holds": lb <= union + 1e-12,
                    "tight": (not disjoint) or abs(lb - union) <= 1e-12})
    return out

