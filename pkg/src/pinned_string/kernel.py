"""
Covariance structure of the stationary pinned string.

A single component of the string is a centered Gaussian field indexed by
space-time points ``(t, x)`` with ``t >= 0``.  Its increment variance is

    E[(U_t(x) - U_s(y))^2] = |t-s|^{1/2} F(|x-y| |t-s|^{-1/2})   (t != s)
                           = |x-y|                              (t == s)

and the field is pinned, ``U_0(0) = 0``, so the covariance follows by
polarization against the origin.

``F(a) = Var U_1(a)`` splits into the heat-kernel smoothing of the two-sided
Brownian initial profile, ``E|N(a, 2)| - sqrt(2/pi)``, and the stochastic
convolution, ``NOISE_VARIANCE * (2 pi)^{-1/2}``.  Equal-time increments of
variance exactly ``|x-y|`` at every ``t`` require the white noise to have
variance 2 for the equation ``du/dt = d^2u/dx^2 + noise``, which collapses F
to ``E|N(a, 2)|``.  With unit noise the kernel built from the same first term
is indefinite.

Besides the kernel this module carries the small amount of Gaussian linear
algebra the rest of the package needs: jittered Cholesky, Schur-complement
conditioning and bivariate rectangle probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, linalg
from scipy.special import erf, erfc, ndtr

SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
F_MIN = INV_SQRT_2PI

# white-noise variance making equal-time increments exactly |x - y|
NOISE_VARIANCE = 2.0
# Var of the stochastic convolution over a time span s is STOCH_CONV_CONST * s^{1/2}
STOCH_CONV_CONST = NOISE_VARIANCE * INV_SQRT_2PI

# |mu|/sigma above which E|N(mu, sigma^2)| switches to the asymptotic form
_ASYMPTOTIC_Z = 8.0

JITTER_START = 1e-12
JITTER_CAP = 1e-6
JITTER_FACTOR = 10.0

SYMMETRY_RTOL = 1e-12


class NotPSDError(linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized within the jitter cap."""


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceTimePoint:
    """A space-time index ``(t, x)`` of the field."""

    t: float
    x: float

    def __post_init__(self):
        t, x = float(self.t), float(self.x)
        if not (math.isfinite(t) and math.isfinite(x)):
            raise ValueError(f"non-finite point ({self.t}, {self.x})")
        if t < 0:
            raise ValueError(f"negative time t={self.t}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    def __iter__(self):
        yield self.t
        yield self.x


ORIGIN = SpaceTimePoint(0.0, 0.0)


def as_points(points) -> np.ndarray:
    """Validate a point collection and return it as an ``(n, 2)`` array of ``(t, x)``."""
    arr = np.asarray(
        [tuple(p) for p in points] if not isinstance(points, np.ndarray) else points,
        dtype=float,
    )
    if arr.ndim == 1 and arr.size == 2:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite coordinates")
    if np.any(arr[:, 0] < 0):
        raise ValueError("points contain negative times")
    return arr


# ---------------------------------------------------------------------------
# variance function
# ---------------------------------------------------------------------------


def mean_abs_normal(mu, sigma):
    """E|X| for X ~ N(mu, sigma^2), evaluated without cancellation.

    For ``|mu|/sigma <= 8`` uses ``sigma*sqrt(2/pi)*exp(-mu^2/2sigma^2) + mu*erf(mu/(sigma*sqrt2))``;
    beyond that, ``|mu|`` plus its exponentially small correction.
    """
    mu = np.abs(np.asarray(mu, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    return mu + _mean_abs_excess(mu, sigma)


def _mean_abs_excess(mu, sigma):
    # E|N(mu, sigma^2)| - |mu|, mu >= 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        z = mu / sigma
        central = sigma * SQRT_2_OVER_PI * np.exp(-0.5 * z * z) + mu * erf(z / SQRT2) - mu
        tail = 2.0 * sigma * INV_SQRT_2PI * np.exp(-0.5 * z * z) - mu * erfc(z / SQRT2)
    out = np.where(z <= _ASYMPTOTIC_Z, central, tail)
    # past z ~ 40 the correction is below 1e-300; avoid inf*0
    out = np.where(z > 40.0, 0.0, out)
    return out[()] if np.ndim(out) == 0 else out


def _f_excess(a):
    # F(a) - a
    return _mean_abs_excess(a, SQRT2) - SQRT_2_OVER_PI + STOCH_CONV_CONST


def f_of(a):
    """Variance function F of the pinned string.

    ``F(a) = E|N(a, 2)| - sqrt(2/pi) + NOISE_VARIANCE (2 pi)^{-1/2}``, which is
    ``E|N(a, 2)|`` at the default noise variance.  Accepts scalars or arrays
    of non-negative finite values.
    """
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("f_of requires finite arguments")
    if np.any(arr < 0):
        raise ValueError("f_of requires non-negative arguments")
    out = arr + _f_excess(arr)
    return float(out) if out.ndim == 0 else out


def f_of_quadrature(a: float, noise_variance: float = NOISE_VARIANCE) -> float:
    """Independent evaluation of F(a) = Var U_1(a) from its white-noise representation.

    ``U_1(a) = int G_1(a-z) B(z) dz + stochastic convolution`` with ``B`` a
    two-sided Brownian motion and ``G_1`` the heat kernel of variance 2.  The
    first variance is a 2-D integral of ``G_1 G_1`` against
    ``(|z| + |w| - |z-w|)/2``; the second is
    ``noise_variance * int_0^1 (8 pi u)^{-1/2} du``.
    """
    a = float(a)
    g = lambda z: math.exp(-((a - z) ** 2) / 4.0) / math.sqrt(4.0 * math.pi)
    half_width = 2.0 * 12.0  # 12 standard deviations of N(a, 2) in each direction

    def bm_cov(z, w):
        return 0.5 * (abs(z) + abs(w) - abs(z - w))

    def inner(z):
        lo, hi = a - half_width, a + half_width
        brk = sorted({p for p in (0.0, z) if lo < p < hi})
        val, _ = integrate.quad(
            lambda w: g(w) * bm_cov(z, w), lo, hi, points=brk or None,
            epsabs=1e-13, epsrel=1e-12, limit=200,
        )
        return g(z) * val

    lo, hi = a - half_width, a + half_width
    outer_pts = [0.0] if lo < 0.0 < hi else None
    initial, _ = integrate.quad(inner, lo, hi, points=outer_pts, epsabs=1e-12, epsrel=1e-11, limit=200)
    noise, _ = integrate.quad(lambda u: (8.0 * math.pi * u) ** -0.5, 0.0, 1.0, epsabs=1e-14)
    return initial + noise_variance * noise


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def _sq_dist_arrays(t1, x1, t2, x2):
    h = np.abs(np.asarray(x1, float) - np.asarray(x2, float))
    tau = np.abs(np.asarray(t1, float) - np.asarray(t2, float))
    root = np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(tau > 0, h / np.where(tau > 0, root, 1.0), 0.0)
    # sqrt(tau)*F(h/sqrt(tau)) written as h + sqrt(tau)*(F(a) - a): no overflow as tau -> 0
    return np.where(tau > 0, h + root * _f_excess(a), h)


def sq_dist(p, q) -> float:
    """Increment variance E[(U^{(i)}(p) - U^{(i)}(q))^2] of one component."""
    p, q = SpaceTimePoint(*p), SpaceTimePoint(*q)
    return float(_sq_dist_arrays(p.t, p.x, q.t, q.x))


def cov(p, q) -> float:
    """Single-component covariance, by polarization against the pinned origin."""
    p, q = SpaceTimePoint(*p), SpaceTimePoint(*q)
    v = _sq_dist_arrays(p.t, p.x, 0.0, 0.0) + _sq_dist_arrays(q.t, q.x, 0.0, 0.0)
    return float(0.5 * (v - _sq_dist_arrays(p.t, p.x, q.t, q.x)))


def variance(points) -> np.ndarray:
    """cov(p, p) for each point, vectorized."""
    P = as_points(points)
    return _sq_dist_arrays(P[:, 0], P[:, 1], 0.0, 0.0)


def cross_cov(points_a, points_b) -> np.ndarray:
    """Rectangular covariance block between two point sets."""
    A, B = as_points(points_a), as_points(points_b)
    va = _sq_dist_arrays(A[:, 0], A[:, 1], 0.0, 0.0)
    vb = _sq_dist_arrays(B[:, 0], B[:, 1], 0.0, 0.0)
    d = _sq_dist_arrays(A[:, 0, None], A[:, 1, None], B[None, :, 0], B[None, :, 1])
    return 0.5 * (va[:, None] + vb[None, :] - d)


@dataclass
class CovarianceMatrix:
    """Covariance of one component over an ordered point set."""

    entries: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        n = self.entries.shape[0]
        if self.entries.shape != (n, n):
            raise ValueError("covariance entries must be square")
        scale = max(1.0, float(np.max(np.abs(self.entries)))) if n else 1.0
        if np.max(np.abs(self.entries - self.entries.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise ValueError("covariance matrix is not symmetric")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def cov_matrix(points) -> CovarianceMatrix:
    """Pairwise covariance matrix of a non-empty point list."""
    P = as_points(points)
    if P.shape[0] == 0:
        raise ValueError("cov_matrix needs at least one point")
    K = cross_cov(P, P)
    K = 0.5 * (K + K.T)
    return CovarianceMatrix(K, P)


# ---------------------------------------------------------------------------
# factorization and conditioning
# ---------------------------------------------------------------------------


@dataclass
class LowerFactor:
    """``L @ L.T == M + jitter_used * I`` on the rows with non-zero variance.

    Rows of ``M`` that vanish identically (e.g. the pinned origin) get zero
    rows in ``L`` and receive no jitter, so samples there are exactly zero.
    """

    L: np.ndarray
    jitter_used: float
    active: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.L.shape[0]


def _entries(M) -> np.ndarray:
    if isinstance(M, CovarianceMatrix):
        return M.entries
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return M


def factorize(M) -> LowerFactor:
    """Cholesky factor with escalating diagonal jitter.

    Tries the bare matrix first, then ``1e-12 * trace/n`` growing tenfold up
    to ``1e-6 * trace/n``.  Raises :class:`NotPSDError` past the cap.
    """
    A = _entries(M)
    n = A.shape[0]
    diag = np.diag(A)
    if np.any(diag < -JITTER_CAP * max(1.0, np.abs(diag).max(initial=0.0))):
        raise NotPSDError("negative diagonal entry: not PSD within tolerance")
    active = ~np.all(A == 0.0, axis=1)
    L = np.zeros((n, n))
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return LowerFactor(L, 0.0, active)
    sub = A[np.ix_(idx, idx)]
    base = float(np.trace(sub)) / idx.size
    jitters = [0.0]
    j = JITTER_START * base
    while j <= JITTER_CAP * base * (1 + 1e-9):
        jitters.append(j)
        j *= JITTER_FACTOR
    for jit in jitters:
        try:
            Ls = np.linalg.cholesky(sub + jit * np.eye(idx.size))
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(Ls)):
            continue
        L[np.ix_(idx, idx)] = Ls
        return LowerFactor(L, jit, active)
    raise NotPSDError(f"matrix of size {n} is not PSD within tolerance (jitter cap {JITTER_CAP:g}*trace/n)")


def _solve_factor(F: LowerFactor, B: np.ndarray) -> np.ndarray:
    # M^{-1} B restricted to active rows; inactive rows carry no information
    out = np.zeros_like(B, dtype=float)
    idx = np.flatnonzero(F.active)
    if idx.size:
        Ls = F.L[np.ix_(idx, idx)]
        out[idx] = linalg.cho_solve((Ls, True), B[idx])
    return out


@dataclass
class GaussianConditioning:
    """Result of conditioning a centered Gaussian vector on a subset of coordinates.

    ``E[u | o] = weights @ values[observed]`` and ``Cov[u | o] = residual``.
    """

    observed: np.ndarray
    unobserved: np.ndarray
    weights: np.ndarray
    residual: np.ndarray

    def residual_variance(self) -> np.ndarray:
        return np.diag(self.residual).copy()


def condition_on(M, observed: Iterable[int]) -> GaussianConditioning:
    """Schur-complement conditioning ``M_uu - M_uo M_oo^{-1} M_ou``."""
    A = _entries(M)
    n = A.shape[0]
    obs = np.array(sorted(set(int(i) for i in observed)), dtype=int)
    if obs.size and (obs.min() < 0 or obs.max() >= n):
        raise IndexError("observed index out of range")
    unobs = np.setdiff1d(np.arange(n), obs)
    M_uu = A[np.ix_(unobs, unobs)]
    if obs.size == 0:
        return GaussianConditioning(obs, unobs, np.zeros((unobs.size, 0)), M_uu.copy())
    M_oo = A[np.ix_(obs, obs)]
    M_ou = A[np.ix_(obs, unobs)]
    fac = factorize(M_oo)
    W = _solve_factor(fac, M_ou).T
    R = M_uu - W @ M_ou
    R = 0.5 * (R + R.T)
    # rounding can push tiny residual variances slightly below zero
    d = np.diag(R).copy()
    np.fill_diagonal(R, np.clip(d, 0.0, np.diag(M_uu)))
    return GaussianConditioning(obs, unobs, W, R)


# ---------------------------------------------------------------------------
# bivariate rectangles
# ---------------------------------------------------------------------------


def _interval_prob(lo, hi, mu, sd):
    if sd == 0.0:
        return 1.0 if lo < mu < hi or (lo <= mu <= hi and lo < hi) else 0.0
    return float(ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd))


def bivariate_rect(mean: Sequence[float], cov2, rect) -> float:
    """P(a1 < X < b1, a2 < Y < b2) for (X, Y) ~ N(mean, cov2).

    Integrates the marginal density of X against the conditional interval
    probability of Y with adaptive quadrature; singular cases (zero variance,
    |correlation| = 1) are handled in closed form.
    """
    m1, m2 = (float(v) for v in mean)
    S = np.asarray(cov2, dtype=float)
    (a1, b1), (a2, b2) = ((float(lo), float(hi)) for lo, hi in rect)
    if S.shape != (2, 2) or not np.all(np.isfinite(S)):
        raise ValueError("cov2 must be a finite 2x2 matrix")
    if abs(S[0, 1] - S[1, 0]) > SYMMETRY_RTOL * max(1.0, np.abs(S).max()):
        raise ValueError("cov2 must be symmetric")
    v1, v2, c = S[0, 0], S[1, 1], S[0, 1]
    det = v1 * v2 - c * c
    tol = 1e-12 * max(1.0, v1 * v2)
    if v1 < 0 or v2 < 0 or det < -tol:
        raise ValueError("cov2 is not positive semidefinite")
    if a1 > b1 or a2 > b2:
        raise ValueError("rectangle intervals must be ordered")
    if a1 == b1 or a2 == b2:
        return 0.0
    s1, s2 = math.sqrt(v1), math.sqrt(v2)
    if s1 == 0.0:
        return _interval_prob(a1, b1, m1, 0.0) * _interval_prob(a2, b2, m2, s2)
    if s2 == 0.0:
        return _interval_prob(a1, b1, m1, s1) * _interval_prob(a2, b2, m2, 0.0)
    rho = max(-1.0, min(1.0, c / (s1 * s2)))
    cond_sd = s2 * math.sqrt(max(0.0, 1.0 - rho * rho))
    slope = rho * s2 / s1
    if cond_sd <= 1e-12 * s2:
        # Y = m2 + slope (X - m1): intersect the two constraints on X
        lo, hi = a1, b1
        y_lo, y_hi = (a2 - m2) / slope + m1, (b2 - m2) / slope + m1
        lo, hi = max(lo, min(y_lo, y_hi)), min(hi, max(y_lo, y_hi))
        return _interval_prob(lo, hi, m1, s1) if hi > lo else 0.0

    def integrand(x):
        mu_y = m2 + slope * (x - m1)
        pdf = math.exp(-0.5 * ((x - m1) / s1) ** 2) / (s1 * math.sqrt(2.0 * math.pi))
        return pdf * (ndtr((b2 - mu_y) / cond_sd) - ndtr((a2 - mu_y) / cond_sd))

    lo, hi = max(a1, m1 - 40.0 * s1), min(b1, m1 + 40.0 * s1)
    if hi <= lo:
        return 0.0
    pts = [m1]
    if slope != 0.0:
        pts += [m1 + (a2 - m2) / slope, m1 + (b2 - m2) / slope]
    pts = sorted({p for p in pts if lo < p < hi})
    val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-11, limit=200)
    return float(min(1.0, max(0.0, val)))
