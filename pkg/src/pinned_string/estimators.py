"""
Exact Gaussian probabilities and Monte Carlo estimators for the small-ball,
two-point and supremum bounds satisfied by the pinned string.

Monte Carlo replicates are processed in fixed-size blocks.  Block membership
is a function of the replicate index alone and each replicate reads its own
counter-based stream, so hit counts (integers, summed) are identical for any
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf
from scipy.stats import norm

from .kernel import (
    SpaceTimePoint,
    as_points,
    bivariate_rect,
    condition_on,
    cov,
    cov_matrix,
    variance,
)
from .sampler import FieldSampler, _check_seed

BLOCK = 256
Z95 = float(norm.ppf(0.975))


@dataclass
class EstimateCI:
    estimate: float
    replicates: int
    stderr: float
    ci95: tuple[float, float]
    seed: int
    hits: int | None = None

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "replicates": self.replicates,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "seed": self.seed,
            "hits": self.hits,
        }


def proportion_ci(hits: int, n: int, seed: int) -> EstimateCI:
    """Normal-approximation interval; rule-of-three upper bound for zero hits."""
    p = hits / n
    se = math.sqrt(p * (1.0 - p) / n)
    if hits == 0:
        ci = (0.0, min(1.0, 3.0 / n))
    else:
        ci = (max(0.0, p - Z95 * se), min(1.0, p + Z95 * se))
    return EstimateCI(p, n, se, ci, seed, hits)


# ---------------------------------------------------------------------------
# replicate machinery
# ---------------------------------------------------------------------------


def map_blocks(fn: Callable[[np.ndarray], object], reps: int, workers: int = 1, block: int = BLOCK) -> list:
    """Apply ``fn`` to consecutive blocks of replicate indices; results in block order."""
    blocks = [np.arange(s, min(s + block, reps)) for s in range(0, reps, block)]
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _box_hits(values: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # values (r, n, d); radii (n,) -> (r, n) bool: all components strictly inside the box
    return np.all(np.abs(values) < radii[None, :, None], axis=2)


# ---------------------------------------------------------------------------
# exact probabilities
# ---------------------------------------------------------------------------


def small_ball_exact(p, delta: float, d: int) -> float:
    """P(U_t(x) in B_delta(0)) = (2 Phi(delta/sigma) - 1)^d, sigma^2 = cov(p, p).

    The box is open; ``delta <= 0`` gives 0.
    """
    p = SpaceTimePoint(*p)
    if delta <= 0:
        return 0.0
    if math.isinf(delta):
        return 1.0
    var = cov(p, p)
    if var == 0.0:
        return 1.0
    return float(erf(delta / math.sqrt(2.0 * var)) ** int(d))


def prop12_ratio(p, delta: float, d: int) -> float:
    """small_ball_exact divided by (delta / (t^{1/2} + |x|)^{1/2})^d."""
    p = SpaceTimePoint(*p)
    scale = math.sqrt(p.t) + abs(p.x)
    if scale == 0.0 or delta <= 0:
        raise ValueError("prop12_ratio needs (t, x) != (0, 0) and delta > 0")
    return small_ball_exact(p, delta, d) / (delta / math.sqrt(scale)) ** int(d)


def prop12_sweep(ts, xs, deltas, d: int = 7) -> "BoundReport":
    T, X = np.meshgrid(np.asarray(ts, float), np.asarray(xs, float), indexing="ij")
    T, X = T.ravel(), X.ravel()
    sd = np.sqrt(variance(np.column_stack([T, X])))
    scale = np.sqrt(np.sqrt(T) + np.abs(X))
    rows = []
    for delta in deltas:
        lhs = erf(delta / (math.sqrt(2.0) * sd)) ** int(d)
        rhs = (delta / scale) ** int(d)
        rows.extend(((t, x, delta), l, r, l / r) for t, x, l, r in zip(T, X, lhs, rhs))
    rows.sort(key=lambda r: r[0])
    return BoundReport.from_rows("prop12", f"t x |x| x delta grid {len(ts)}x{len(xs)}x{len(deltas)}, d={d}", rows, 0)


def pair_cov(p, q) -> np.ndarray:
    return cov_matrix([tuple(p), tuple(q)]).entries


def two_point_exact(p, q, d1: float, d2: float, d: int) -> float:
    """P(U(p) in B_{d1}(0), U(q) in B_{d2}(0)) = bivariate box probability ^ d."""
    if d1 <= 0 or d2 <= 0:
        return 0.0
    S = pair_cov(p, q)
    one = bivariate_rect((0.0, 0.0), S, ((-d1, d1), (-d2, d2)))
    return float(one ** int(d))


# ---------------------------------------------------------------------------
# bound sweeps
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    bound: str
    sweep: str
    max_ratio: float
    argmax: tuple
    table: list = field(repr=False)
    skipped: int = 0

    @classmethod
    def from_rows(cls, bound, sweep, rows, skipped):
        if not rows:
            raise ValueError("sweep produced no legal configurations")
        k = int(np.argmax([r[3] for r in rows]))
        return cls(bound, sweep, float(rows[k][3]), tuple(float(v) for v in rows[k][0]), rows, skipped)

    def as_dict(self) -> dict:
        return {
            "bound": self.bound,
            "sweep": self.sweep,
            "max_ratio": self.max_ratio,
            "argmax": list(self.argmax),
            "configurations": len(self.table),
            "skipped": self.skipped,
        }


@dataclass
class Sweep:
    """Axis values for a bound sweep; ``refine`` inserts midpoints on every axis."""

    axes: dict

    def refine(self) -> "Sweep":
        out = {}
        for name, vals in self.axes.items():
            v = np.asarray(vals, dtype=float)
            if v.size < 2:
                out[name] = v.tolist()
                continue
            mids = 0.5 * (v[1:] + v[:-1])
            out[name] = np.sort(np.concatenate([v, mids])).tolist()
        return Sweep(out)

    def product(self):
        names = list(self.axes)
        grids = np.meshgrid(*[np.asarray(self.axes[n], float) for n in names], indexing="ij")
        return names, np.column_stack([g.ravel() for g in grids])


def lemma41_legal(t, s, x, y) -> bool:
    cond1 = t >= 1 and abs(x) <= 2 * math.sqrt(t) and abs(y) <= 2 * math.sqrt(t) and 0 <= s <= t
    cond2 = s >= 0 and abs(y) <= 2 * math.sqrt(s)
    return cond1 or cond2


def lemma41_terms(t, s, x, y, alpha, delta, d=6):
    lhs = two_point_exact((t, x), (t + s, x + y), delta * t**-alpha, delta * (t + s) ** -alpha, d)
    den = (math.sqrt(s) + abs(y)) ** 3 * (math.sqrt(t) + abs(x)) ** 3
    rhs = (t + s) ** (-6 * alpha) * t ** (-6 * alpha) / den if den > 0 else math.inf
    return lhs, rhs


def lemmaA1_legal(t, s, x, y, d1, d2) -> bool:
    return 1 <= t <= 2 and 1 <= s <= 2 and abs(x) <= 2 and abs(y) <= 2 and 0 < d1 < 1 and 0 < d2 < 1


def lemmaA1_terms(t, s, x, y, d1, d2, d=6):
    lhs = two_point_exact((t, x), (s, y), d1, d2, d)
    sep = math.sqrt(abs(t - s)) + abs(x - y)
    rhs = d1**6 * d2**6 * sep**-3 if sep > 0 else math.inf
    return lhs, rhs


def bound_ratio_sweep(bound: str, sweep: Sweep, alpha: float = 1.0, delta: float = 0.5) -> BoundReport:
    """Evaluate lhs/rhs of a two-point bound over every legal sweep configuration.

    ``lemma41`` axes: ``t, s, x, y`` (radii ``delta t^-alpha`` and
    ``delta (t+s)^-alpha``, d = 6).  ``lemmaA1`` axes: ``t, s, x, y, d1, d2``.
    Illegal configurations and those with an infinite right-hand side
    (coincident points) are skipped and counted.
    """
    names, configs = sweep.product()
    rows, skipped = [], 0
    for c in configs:
        kw = dict(zip(names, c.tolist()))
        if bound == "lemma41":
            if not lemma41_legal(**kw):
                skipped += 1
                continue
            lhs, rhs = lemma41_terms(alpha=alpha, delta=delta, **kw)
        elif bound == "lemmaA1":
            if not lemmaA1_legal(**kw):
                skipped += 1
                continue
            lhs, rhs = lemmaA1_terms(**kw)
        else:
            raise ValueError(f"unknown bound {bound!r}")
        if not math.isfinite(rhs):
            skipped += 1
            continue
        rows.append((tuple(c.tolist()), lhs, rhs, lhs / rhs))
    desc = ", ".join(f"{n}:{len(sweep.axes[n])}" for n in names)
    if bound == "lemma41":
        desc += f" (alpha={alpha}, delta={delta})"
    return BoundReport.from_rows(bound, desc, rows, skipped)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def mc_event_prob(points, d: int, radii, mode: str = "all", reps: int = 10_000, seed: int = 0,
                  workers: int = 1, sampler: FieldSampler | None = None) -> EstimateCI:
    """Frequency with which (all | any) points fall in their open boxes.

    ``radii`` is one radius per point (``inf`` for no constraint).
    """
    if mode not in ("all", "any"):
        raise ValueError("mode must be 'all' or 'any'")
    if reps < 100:
        raise ValueError("reps must be at least 100")
    seed = _check_seed(seed)
    P = as_points(points)
    r = np.broadcast_to(np.asarray(radii, dtype=float), (P.shape[0],)).copy()
    if np.all(np.isinf(r)):
        return EstimateCI(1.0, reps, 0.0, (1.0, 1.0), seed, reps)
    smp = sampler or FieldSampler(P)
    reduce = np.all if mode == "all" else np.any

    def count(block):
        inside = _box_hits(smp.values(d, seed, block), r)
        return int(reduce(inside, axis=1).sum())

    hits = sum(map_blocks(count, reps, workers))
    return proportion_ci(hits, reps, seed)


def mc_event_counts(points, d: int, radii_sets: Sequence, mode: str, reps: int, seed: int,
                    workers: int = 1) -> list[EstimateCI]:
    """Like :func:`mc_event_prob` for several radius vectors on the same draws."""
    seed = _check_seed(seed)
    P = as_points(points)
    smp = FieldSampler(P)
    R = [np.broadcast_to(np.asarray(r, float), (P.shape[0],)) for r in radii_sets]
    reduce = np.all if mode == "all" else np.any

    def count(block):
        vals = smp.values(d, seed, block)
        return np.array([int(reduce(_box_hits(vals, r), axis=1).sum()) for r in R])

    hits = np.sum(map_blocks(count, reps, workers), axis=0)
    return [proportion_ci(int(h), reps, seed) for h in hits]


def unit_square_grid(resolution: float) -> np.ndarray:
    m = int(round(1.0 / resolution))
    if abs(m * resolution - 1.0) > 1e-9:
        raise ValueError("resolution must divide 1")
    g = np.linspace(0.0, 1.0, m + 1)
    T, X = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([T.ravel(), X.ravel()])


def sup_samples(points, d: int, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """Per-replicate max over points of the Euclidean norm |U(p)|."""
    smp = FieldSampler(points)

    def block_max(block):
        v = smp.values(d, seed, block)
        return np.sqrt(np.sum(v * v, axis=2)).max(axis=1)

    return np.concatenate(map_blocks(block_max, reps, workers))


@dataclass
class SupTailFit:
    table: list  # (delta, EstimateCI)
    c2: float
    intercept: float
    r_squared: float
    excluded: list

    def as_dict(self) -> dict:
        return {
            "c2": self.c2,
            "log_c1": self.intercept,
            "r_squared": self.r_squared,
            "excluded_deltas": self.excluded,
            "table": [{"delta": dl, **e.as_dict()} for dl, e in self.table],
        }


def sup_tail_fit(deltas, resolution: float = 0.05, reps: int = 20_000, seed: int = 0, d: int = 1,
                 workers: int = 1) -> SupTailFit:
    """Estimate P(max over the [0,1]^2 grid of |U| >= delta) and fit log P = log c1 - c2 delta^2.

    Deltas whose estimate is below ``10/reps`` are excluded from the fit.
    """
    if resolution > 0.1:
        raise ValueError("resolution must be <= 0.1")
    if any(dl < 0 for dl in deltas):
        raise ValueError("deltas must be non-negative")
    seed = _check_seed(seed)
    sups = sup_samples(unit_square_grid(resolution), d, reps, seed, workers)
    table, xs, ys, excluded = [], [], [], []
    for dl in deltas:
        hits = int(np.sum(sups >= dl)) if dl > 0 else reps
        est = proportion_ci(hits, reps, seed)
        table.append((float(dl), est))
        if est.estimate >= 10.0 / reps:
            xs.append(dl * dl)
            ys.append(math.log(est.estimate))
        else:
            excluded.append(float(dl))
    if len(xs) < 2:
        return SupTailFit(table, math.nan, math.nan, math.nan, excluded)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * np.asarray(xs) + intercept
    ss_res = float(np.sum((np.asarray(ys) - pred) ** 2))
    ss_tot = float(np.sum((np.asarray(ys) - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SupTailFit(table, float(-slope), float(intercept), r2, excluded)


QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


def quantile_with_se(samples: np.ndarray, q: float) -> tuple[float, float]:
    """Sample quantile and a distribution-free standard error.

    The error is half the width of the binomial order-statistic 95% interval,
    divided by 1.96.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    est = float(np.quantile(x, q))
    half = Z95 * math.sqrt(n * q * (1 - q))
    lo = int(max(0, math.floor(n * q - half)))
    hi = int(min(n - 1, math.ceil(n * q + half)))
    return est, float((x[hi] - x[lo]) / (2 * Z95))


def spatial_grid(t: float, L_window: float, resolution: float) -> np.ndarray:
    """Points ``(t, k * resolution * sqrt(t))`` with ``|k * resolution| <= L_window``."""
    kmax = int(math.floor(L_window / resolution + 1e-9))
    k = np.arange(-kmax, kmax + 1)
    return np.column_stack([np.full(k.size, float(t)), k * resolution * math.sqrt(t)])


def inf_scaled_quantiles(t: float, L_window, resolution: float = 0.05, reps: int = 1000, seed: int = 0,
                         d: int = 7, levels=QUANTILE_LEVELS, workers: int = 1) -> dict:
    """Quantiles of ``min_{|x| <= L sqrt(t)} |U_t(x)| / t^{1/4}`` over a spatial grid.

    ``L_window`` may be a sequence; all windows are then read off a single
    draw on the largest one, so infima over nested windows are ordered
    replicate by replicate.  Returns ``{L: [(level, quantile, stderr), ...]}``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if resolution * math.sqrt(t) > 0.1 * t**0.25 * (1 + 1e-12):
        raise ValueError("grid too coarse: need resolution * sqrt(t) <= 0.1 * t^(1/4)")
    windows = sorted(np.atleast_1d(np.asarray(L_window, dtype=float)).tolist())
    P = spatial_grid(t, windows[-1], resolution)
    u = P[:, 1] / math.sqrt(t)
    smp = FieldSampler(P)
    seed = _check_seed(seed)

    def block_inf(block):
        v = smp.values(d, seed, block)
        norms = np.sqrt(np.sum(v * v, axis=2))
        return np.column_stack([norms[:, np.abs(u) <= L + 1e-9].min(axis=1) for L in windows])

    infs = np.concatenate(map_blocks(block_inf, reps, workers)) / t**0.25
    return {L: [(q, *quantile_with_se(infs[:, k], q)) for q in levels] for k, L in enumerate(windows)}


def conv_conditional_variance(t: float, s: float, X: float = 30.0, spacing: float = 0.1) -> float:
    """Residual variance of U_{t+s}(0) given U_t on ``{k * spacing : |k * spacing| <= X}``."""
    if spacing > 0.2:
        raise ValueError("spacing must be <= 0.2")
    if X < 10 * math.sqrt(s):
        raise ValueError("window X must be at least 10 sqrt(s)")
    k = int(math.floor(X / spacing + 1e-9))
    xs = np.arange(-k, k + 1) * spacing
    P = np.vstack([np.column_stack([np.full(xs.size, float(t)), xs]), [[t + s, 0.0]]])
    res = condition_on(cov_matrix(P), range(xs.size))
    return float(res.residual[0, 0])
