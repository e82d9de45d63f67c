"""
Named experiments run by the command-line tool.

Each experiment declares a flat map of default parameters, validates a
merged parameter map before doing any work, and returns checks (pass/fail
with the measured value), tables (written as CSV) and a JSON payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, stats

from . import constructions as C
from . import estimators as E
from . import kernel as K
from . import sampler as S
from . import spde as P


class ConfigError(ValueError):
    """A parameter map that violates an experiment's preconditions."""


@dataclass
class Check:
    name: str
    passed: bool
    measured: object
    threshold: object

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured, "threshold": self.threshold}


@dataclass
class Table:
    name: str
    header: list
    rows: list


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    payload: dict = field(default_factory=dict)

    def check(self, name, passed, measured, threshold):
        self.checks.append(Check(name, bool(passed), measured, threshold))

    def table(self, name, header, rows):
        self.tables.append(Table(name, list(header), [list(r) for r in rows]))


@dataclass
class Experiment:
    name: str
    summary: str
    defaults: dict
    run: Callable[[dict, int, int], Outcome]
    validate: Callable[[dict], None] = lambda p: None


REGISTRY: dict[str, Experiment] = {}


def experiment(name: str, summary: str, defaults: dict):
    def deco(fn):
        validator = getattr(fn, "_validate", lambda p: None)
        REGISTRY[name] = Experiment(name, summary, defaults, fn, validator)
        return fn

    return deco


def validator(fn):
    def deco(run):
        run._validate = fn
        return run

    return deco


# ---------------------------------------------------------------------------
# parameter handling
# ---------------------------------------------------------------------------


def _coerce(key, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key}: expected a finite number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{key}: expected a non-empty list, got {value!r}")
        if default and isinstance(default[0], list):
            if not all(isinstance(v, list) for v in value):
                raise ConfigError(f"{key}: expected a list of lists")
            return [[_coerce(key, 0.0, x) for x in v] for v in value]
        proto = default[0] if default else 0.0
        return [_coerce(key, proto, v) for v in value]
    raise ConfigError(f"{key}: unsupported parameter type")


def resolve_params(exp: Experiment, overrides: dict) -> dict:
    unknown = sorted(set(overrides) - set(exp.defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {exp.name}: {', '.join(unknown)}; valid: {', '.join(sorted(exp.defaults))}")
    params = {k: (_coerce(k, v, overrides[k]) if k in overrides else v) for k, v in exp.defaults.items()}
    exp.validate(params)
    return params


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _positive(p, *keys):
    for k in keys:
        vals = p[k] if isinstance(p[k], list) else [p[k]]
        _require(all(v > 0 for v in vals), f"{k} must be positive")


def _f(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# kernel-validate
# ---------------------------------------------------------------------------


def _v_kernel(p):
    _positive(p, "random_pairs", "bound_pairs", "f_grid_points", "cond_matrices", "equal_time_tol", "f_tol")
    _require(all(a >= 0 for a in p["f_points"]), "f_points must be non-negative")
    _require(0 < p["bound_lo"] < p["bound_hi"], "need 0 < bound_lo < bound_hi")


@experiment("kernel-validate", "variance function, equal-time law, two-sided bound, conditioning display", {
    "random_pairs": 10_000,
    "equal_time_tol": 1e-9,
    "f_points": [0.0, 0.5, 1.0, 2.0, 5.0, 10.0],
    "f_tol": 1e-6,
    "f_grid_points": 100_001,
    "bound_pairs": 10_000,
    "bound_lo": 0.40,
    "bound_hi": 2.0,
    "cond_matrices": 100,
})
@validator(_v_kernel)
def run_kernel_validate(p, seed, workers):
    out = Outcome()
    rng = np.random.Generator(np.random.Philox(key=seed))

    n = p["random_pairs"]
    t = rng.uniform(0, 100, n)
    x, y = rng.uniform(-50, 50, (2, n))
    err = np.abs(K._sq_dist_arrays(t, x, t, y) - np.abs(x - y)).max()
    out.check("equal_time_law", err <= p["equal_time_tol"], _f(err), p["equal_time_tol"])

    rows = []
    for a in p["f_points"]:
        closed, quad = _f(K.f_of(a)), K.f_of_quadrature(a)
        rows.append((a, closed, quad, abs(closed - quad)))
    out.table("f_validation", ["a", "closed_form", "quadrature", "abs_diff"], rows)
    worst = max(r[3] for r in rows)
    out.check("f_quadrature_agreement", worst <= p["f_tol"], worst, p["f_tol"])

    grid = np.linspace(0.0, 100.0, p["f_grid_points"])
    fg = K.f_of(grid)
    out.check("f_lower_bound", fg.min() >= K.F_MIN, _f(fg.min()), K.F_MIN)
    above = fg[grid >= 1.0]
    out.check("f_nondecreasing_above_1", np.all(np.diff(above) >= 0), _f(np.diff(above).min()), 0.0)
    growth = np.abs(fg[grid >= 10.0] / grid[grid >= 10.0] - 1.0).max()
    out.check("f_linear_growth", growth <= 0.05, _f(growth), 0.05)

    res = optimize.minimize_scalar(lambda a: K.f_of(a) / (1 + a), bounds=(0.0, 20.0), method="bounded",
                                   options={"xatol": 1e-10})
    out.payload["min_f_over_1_plus_a"] = {"a": _f(res.x), "value": _f(res.fun)}
    out.check("two_sided_floor_below_minimum", p["bound_lo"] <= res.fun, _f(res.fun), p["bound_lo"])

    m = p["bound_pairs"]
    t1, t2 = rng.uniform(0, 16, (2, m))
    x1, x2 = rng.uniform(-8, 8, (2, m))
    sep = np.abs(x1 - x2) + np.sqrt(np.abs(t1 - t2))
    ratio = K._sq_dist_arrays(t1, x1, t2, x2)[sep > 0] / sep[sep > 0]
    out.payload["two_sided_ratio"] = {"min": _f(ratio.min()), "max": _f(ratio.max()), "pairs": int(ratio.size)}
    out.check("two_sided_bound", ratio.min() >= p["bound_lo"] and ratio.max() <= p["bound_hi"],
              [_f(ratio.min()), _f(ratio.max())], [p["bound_lo"], p["bound_hi"]])

    # the displayed conditional-variance formula, with rho the L2 distance between X and Y
    rows, n_y, n_x = [], 0, 0
    for _ in range(p["cond_matrices"]):
        A = rng.standard_normal((2, 2))
        M = A @ A.T
        sx2, sy2, c = M[0, 0], M[1, 1], M[0, 1]
        sx, sy = math.sqrt(sx2), math.sqrt(sy2)
        rho2 = sx2 + sy2 - 2 * c
        display = (rho2 - (sx - sy) ** 2) * ((sx + sy) ** 2 - rho2) / (4 * sx2)
        x_given_y = _f(K.condition_on(M, [1]).residual[0, 0])
        y_given_x = _f(K.condition_on(M, [0]).residual[0, 0])
        my = math.isclose(display, y_given_x, rel_tol=1e-9, abs_tol=1e-12)
        mx = math.isclose(display, x_given_y, rel_tol=1e-9, abs_tol=1e-12)
        n_y += my
        n_x += mx
        rows.append((sx2, sy2, c, display, x_given_y, y_given_x, "Y|X" if my else ("X|Y" if mx else "neither")))
    out.table("conditional_display", ["var_x", "var_y", "cov", "display", "var_x_given_y", "var_y_given_x", "matches"], rows)
    out.payload["conditional_display"] = {"matches_var_y_given_x": n_y, "matches_var_x_given_y": n_x, "matrices": len(rows)}
    out.check("display_equals_var_y_given_x", n_y == len(rows), n_y, len(rows))
    return out


# ---------------------------------------------------------------------------
# scaling-check
# ---------------------------------------------------------------------------


def _v_scaling(p):
    _positive(p, "scales", "points", "sets", "tol")
    _require(0 < p["eps"] < 1e-6, "eps must lie in (0, 1e-6)")


@experiment("scaling-check", "covariance scaling identity and time-branch continuity", {
    "scales": [0.5, 2.0, 10.0],
    "points": 20,
    "sets": 5,
    "tol": 1e-9,
    "eps": 1e-12,
    "continuity_tol": 1e-4,
})
@validator(_v_scaling)
def run_scaling_check(p, seed, workers):
    out = Outcome()
    rng = np.random.Generator(np.random.Philox(key=seed))
    rows = []
    for s in range(p["sets"]):
        pts = np.column_stack([rng.uniform(0, 4, p["points"]), rng.uniform(-4, 4, p["points"])])
        base = K.cov_matrix(pts).entries
        for L in p["scales"]:
            scaled = K.cov_matrix(S.scale_points(pts, L)).entries
            rows.append((s, L, _f(np.abs(scaled - L**2 * base).max() / L**2)))
    out.table("scaling", ["set", "L", "max_abs_err_over_L2"], rows)
    worst = max(r[2] for r in rows)
    out.check("scaling_identity", worst <= p["tol"], worst, p["tol"])

    h = np.linspace(0.1, 8.0, 200)
    t = 3.0
    jump = np.abs(K._sq_dist_arrays(t, 0.0, t + p["eps"], h) - K._sq_dist_arrays(t, 0.0, t, h)).max()
    out.check("branch_continuity", jump <= p["continuity_tol"], _f(jump), p["continuity_tol"])
    mapped = S.scale_points([(1.0, 1.0)], 2.0)[0].tolist()
    out.check("scale_points_example", mapped == [16.0, 4.0], mapped, [16.0, 4.0])
    return out


# ---------------------------------------------------------------------------
# sampler-validate
# ---------------------------------------------------------------------------


def _v_sampler(p):
    _require(p["reps"] >= 1000 and p["ks_reps"] >= 100, "reps >= 1000 and ks_reps >= 100 required")
    _require(0 < p["ks_alpha"] < 1, "ks_alpha must lie in (0, 1)")
    _require(p["t0"] >= 0 and p["t"] >= 0, "times must be non-negative")


@experiment("sampler-validate", "exact sampler: variance, increments, normality, independence", {
    "reps": 100_000,
    "ks_reps": 10_000,
    "ks_alpha": 0.01,
    "t0": 2.0,
    "x0": 1.0,
    "t": 1.0,
    "x": 0.5,
})
@validator(_v_sampler)
def run_sampler_validate(p, seed, workers):
    out = Outcome()
    n = p["reps"]
    reps = np.arange(n)

    zero = S.FieldSampler([(0.0, 0.0)]).values(3, seed, np.arange(10))
    out.check("origin_pinned", np.all(zero == 0.0), _f(np.abs(zero).max()), 0.0)

    def var_check(name, vals, target):
        v = _f(np.var(vals, ddof=1))
        se = target * math.sqrt(2.0 / (vals.size - 1))
        z = (v - target) / se
        out.check(name, abs(z) <= 3.0, {"variance": v, "target": target, "z": _f(z)}, "|z| <= 3")

    one = S.FieldSampler([(1.0, 0.0)])
    v1 = _sampled(one, 1, seed, reps, workers)[:, 0, 0]
    var_check("variance_at_(1,0)", v1, _f(K.f_of(0.0)))

    pair = S.FieldSampler([(2.0, 0.0), (2.0, 3.0)])
    v2 = _sampled(pair, 1, seed, reps, workers)[:, :, 0]
    var_check("equal_time_increment", v2[:, 1] - v2[:, 0], 3.0)

    ks = stats.kstest(v1[: p["ks_reps"]], "norm", args=(0.0, math.sqrt(K.f_of(0.0))))
    out.check("ks_normality", ks.pvalue >= p["ks_alpha"], _f(ks.pvalue), p["ks_alpha"])

    m = p["ks_reps"]
    two = _sampled(one, 2, seed, np.arange(m), workers)[:, 0, :]
    r = _f(np.corrcoef(two[:, 0], two[:, 1])[0, 1])
    out.check("component_independence", abs(r) <= 3 / math.sqrt(m), r, 3 / math.sqrt(m))

    a, b = (p["t0"], p["x0"]), (p["t0"] + p["t"], p["x0"] + p["x"])
    tv = _sampled(S.FieldSampler([a, b]), 1, seed, reps, workers)[:, :, 0]
    var_check("translation_invariance", tv[:, 1] - tv[:, 0], K.sq_dist((p["t"], p["x"]), (0.0, 0.0)))

    again = one.values(1, seed, reps[:BLOCK_CHECK])
    same = bool(np.array_equal(again[:, 0, 0], v1[:BLOCK_CHECK]))
    out.check("seed_determinism", same, same, True)
    return out


BLOCK_CHECK = 1000


def _sampled(smp: S.FieldSampler, d, seed, reps, workers):
    parts = E.map_blocks(lambda blk: smp.values(d, seed, reps[blk]), len(reps), workers, block=4096)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# spde-crosscheck
# ---------------------------------------------------------------------------


def _v_spde(p):
    try:
        P.SpdeConfig(p["dx"], p["dt"], p["X"], p["T"], p["d"], p["boundary"], 0).validate()
    except P.ConfigError as exc:
        raise ConfigError(str(exc)) from None
    _require(p["replicates"] >= 2, "replicates must be >= 2")
    _require(p["T"] >= 1e-12, "T must be positive")
    for h in p["separations"]:
        _require(h > 0 and P._is_integral(h / p["dx"]), "separations must be positive multiples of dx")
        _require(-p["X"] + p["guard"] + h <= p["X"] - p["guard"], "window too small for guard and separations")
    _require(p["time_lag"] > 0 and p["time_lag"] <= p["T"] and P._is_integral(p["time_lag"] / p["dt"]),
             "time_lag must be a positive multiple of dt no larger than T")


@experiment("spde-crosscheck", "finite-difference integrator against the exact increment law", {
    "dx": 0.05,
    "dt": 0.001,
    "X": 20.0,
    "T": 1.0,
    "d": 1,
    "boundary": "periodic",
    "replicates": 200,
    "separations": [0.5, 1.0, 1.5, 2.0],
    "time_lag": 1.0,
    "guard": 5.0,
    "rtol": 0.10,
    "compare_boundaries": True,
    "boundary_rtol": 0.02,
})
@validator(_v_spde)
def run_spde_crosscheck(p, seed, workers):
    out = Outcome()
    T, lag_t = p["T"], p["time_lag"]
    snaps = sorted({T, T - lag_t})
    bias = P.euler_increment_bias(p["dx"], p["dt"])
    out.payload["euler_bias_prediction"] = bias
    boundaries = [p["boundary"]]
    if p["compare_boundaries"]:
        boundaries.append("reflecting" if p["boundary"] == "periodic" else "periodic")
    results = {}
    rows = []
    for b in boundaries:
        cfg = P.SpdeConfig(p["dx"], p["dt"], p["X"], T, p["d"], b, seed)
        trajs = P.simulate(cfg, snaps, replicates=p["replicates"])
        i_T, i_0 = snaps.index(T), snaps.index(T - lag_t)
        for h in p["separations"]:
            lag = int(round(h / p["dx"]))
            for kind, ia, ib, target in (
                ("equal_time", i_T, i_T, h),
                ("time_lag", i_T, i_0, K.sq_dist((lag_t, h), (0.0, 0.0))),
            ):
                mean, se = P.increment_variance(trajs, ia, ib, lag, p["guard"])
                results[(b, kind, h)] = mean
                rows.append((b, kind, h, lag_t if kind == "time_lag" else 0.0, mean, se, target, mean / target - 1.0))
    out.table("increments", ["boundary", "kind", "separation", "time_lag", "empirical", "stderr", "kernel", "rel_err"], rows)
    main = p["boundary"]
    for r in rows:
        if r[0] == main:
            out.check(f"{r[1]}_h={r[2]}", abs(r[7]) <= p["rtol"], r[7], p["rtol"])
    if p["compare_boundaries"]:
        other = boundaries[1]
        diff = max(abs(results[(main, k, h)] / results[(other, k, h)] - 1.0)
                   for k in ("equal_time", "time_lag") for h in p["separations"])
        out.check("boundary_insensitivity", diff <= p["boundary_rtol"], diff, p["boundary_rtol"])
    return out


# ---------------------------------------------------------------------------
# prop12
# ---------------------------------------------------------------------------


def _v_prop12(p):
    _require(1 <= p["t_min"] < p["t_max"], "need 1 <= t_min < t_max")
    _require(0 < p["delta_min"] <= p["delta_max"] <= 1, "deltas must lie in (0, 1]")
    _require(p["x_max"] > 0 and p["d"] >= 1 and p["nt"] >= 2 and p["nx"] >= 2 and p["ndelta"] >= 1, "bad grid sizes")


@experiment("prop12", "small-ball ratio over a (t, x, delta) sweep", {
    "t_min": 1.0, "t_max": 100.0, "nt": 100,
    "x_max": 10.0, "nx": 81,
    "delta_min": 0.01, "delta_max": 1.0, "ndelta": 100,
    "d": 7,
    "ceiling": 3.0,
})
@validator(_v_prop12)
def run_prop12(p, seed, workers):
    out = Outcome()
    ts = np.linspace(p["t_min"], p["t_max"], p["nt"])
    xs = np.linspace(-p["x_max"], p["x_max"], p["nx"])
    ds = np.linspace(p["delta_min"], p["delta_max"], p["ndelta"])
    rep = E.prop12_sweep(ts, xs, ds, p["d"])
    out.payload["report"] = rep.as_dict()
    out.check("max_ratio_below_ceiling", rep.max_ratio <= p["ceiling"], rep.max_ratio, p["ceiling"])
    ratios = np.array([r[3] for r in rep.table]).reshape(p["nt"], p["nx"], p["ndelta"])
    asym = _f(np.abs(ratios - ratios[:, ::-1, :]).max() / ratios.max())
    out.check("reflection_symmetry", asym <= 1e-12, asym, 1e-12)
    out.check("ratios_finite_positive", bool(np.all(np.isfinite(ratios)) and np.all(ratios > 0)), True, True)
    worst = np.unravel_index(np.argmax(ratios), ratios.shape)
    out.table("max_over_delta", ["t", "x", "max_ratio"],
              [(_f(ts[i]), _f(xs[j]), _f(ratios[i, j].max())) for i in range(p["nt"]) for j in range(p["nx"])])
    out.payload["argmax_index"] = [int(v) for v in worst]
    return out


# ---------------------------------------------------------------------------
# lemma41 / lemmaA1
# ---------------------------------------------------------------------------


def _two_point_run(bound, p, seed, workers):
    out = Outcome()
    axes = {k: p[k] for k in (("t", "s", "x", "y") if bound == "lemma41" else ("t", "s", "x", "y", "d1", "d2"))}
    sweep = E.Sweep(axes)
    kw = {"alpha": p["alpha"], "delta": p["delta"]} if bound == "lemma41" else {}
    coarse = E.bound_ratio_sweep(bound, sweep, **kw)
    fine = E.bound_ratio_sweep(bound, sweep.refine(), **kw)
    drift = abs(fine.max_ratio / coarse.max_ratio - 1.0)
    out.payload["coarse"] = coarse.as_dict()
    out.payload["refined"] = fine.as_dict()
    out.table("ratios", list(axes) + ["lhs", "rhs", "ratio"], [(*c, l, r, q) for c, l, r, q in coarse.table])
    finite = all(math.isfinite(r[3]) and r[3] > 0 for r in coarse.table + fine.table)
    out.check("ratios_finite_positive", finite, finite, True)
    out.check("refinement_drift", drift <= p["drift_tol"], drift, p["drift_tol"])

    rows = []
    for k, cfg in enumerate(p["mc_configs"]):
        if bound == "lemma41":
            t, s, x, y = cfg
            pts = [(t, x), (t + s, x + y)]
            r1, r2 = p["delta"] * t ** -p["alpha"], p["delta"] * (t + s) ** -p["alpha"]
        else:
            t, s, x, y, r1, r2 = cfg
            pts = [(t, x), (s, y)]
        exact = E.two_point_exact(pts[0], pts[1], r1, r2, p["mc_d"])
        est = E.mc_event_prob(pts, p["mc_d"], [r1, r2], "all", p["mc_reps"], seed + k, workers)
        z = (est.estimate - exact) / est.stderr if est.stderr > 0 else (0.0 if est.estimate == exact else math.inf)
        rows.append((*cfg, exact, est.estimate, est.stderr, z))
        out.check(f"mc_spot_check_{k}", abs(z) <= 3.0, _f(z), 3.0)
    out.table("mc_spot_checks", [f"c{i}" for i in range(len(p["mc_configs"][0]))] + ["exact", "mc", "stderr", "z"], rows)
    return out


def _v_two_point(bound, p):
    _require(p["mc_reps"] >= 100 and p["mc_d"] >= 1, "mc_reps >= 100 and mc_d >= 1 required")
    if bound == "lemma41":
        _positive(p, "alpha", "delta")
        width = 4
    else:
        width = 6
    _require(all(len(c) == width for c in p["mc_configs"]), f"each mc config needs {width} entries")
    for c in p["mc_configs"]:
        ok = E.lemma41_legal(*c) if bound == "lemma41" else E.lemmaA1_legal(*c)
        _require(ok, f"mc config {c} violates the {bound} preconditions")


@experiment("lemma41", "two-point bound on the d = 6 lattice scale", {
    "alpha": 1.0,
    "delta": 0.5,
    "t": [1.0, 2.0, 4.0, 8.0, 16.0],
    "s": [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
    "x": [0.0, 1.0, 2.0, 4.0, 8.0],
    "y": [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0],
    "drift_tol": 0.10,
    "mc_configs": [[1.0, 1.0, 0.0, 1.0], [2.0, 0.5, 1.0, -1.0], [4.0, 2.0, 2.0, 2.0]],
    "mc_reps": 20_000,
    "mc_d": 1,
})
@validator(lambda p: _v_two_point("lemma41", p))
def run_lemma41(p, seed, workers):
    return _two_point_run("lemma41", p, seed, workers)


@experiment("lemmaA1", "unit-scale two-point bound", {
    "t": [1.0, 1.5, 2.0],
    "s": [1.0, 1.5, 2.0],
    "x": [-2.0, -1.0, 0.0, 1.0, 2.0],
    "y": [-2.0, -1.0, 0.0, 1.0, 2.0],
    "d1": [0.1, 0.5, 0.9],
    "d2": [0.1, 0.5, 0.9],
    "drift_tol": 0.10,
    "mc_configs": [[1.0, 2.0, 0.0, 1.0, 0.5, 0.5], [1.5, 1.0, -1.0, 1.0, 0.9, 0.5], [2.0, 2.0, 0.0, 0.5, 0.9, 0.9]],
    "mc_reps": 20_000,
    "mc_d": 1,
})
@validator(lambda p: _v_two_point("lemmaA1", p))
def run_lemmaA1(p, seed, workers):
    return _two_point_run("lemmaA1", p, seed, workers)


# ---------------------------------------------------------------------------
# sup-tail
# ---------------------------------------------------------------------------


def _v_sup(p):
    _require(0 < p["resolution"] <= 0.1, "resolution must lie in (0, 0.1]")
    _require(abs(round(1 / p["resolution"]) * p["resolution"] - 1) < 1e-9, "resolution must divide 1")
    _require(all(d >= 0 for d in p["deltas"]), "deltas must be non-negative")
    _require(p["reps"] >= 100 and p["d"] >= 1, "reps >= 100 and d >= 1 required")


@experiment("sup-tail", "tail of the grid supremum over the unit square", {
    "deltas": [1.0, 1.5, 2.0, 2.5, 3.0],
    "resolution": 0.05,
    "reps": 20_000,
    "d": 1,
    "r2_min": 0.9,
    "refine": False,
})
@validator(_v_sup)
def run_sup_tail(p, seed, workers):
    out = Outcome()
    fit = E.sup_tail_fit(p["deltas"], p["resolution"], p["reps"], seed, p["d"], workers)
    out.payload["fit"] = fit.as_dict()
    out.table("sup_tail", ["delta", "estimate", "stderr", "ci_lo", "ci_hi", "hits"],
              [(dl, e.estimate, e.stderr, *e.ci95, e.hits) for dl, e in fit.table])
    est = [e.estimate for _, e in sorted(fit.table)]
    out.check("nonincreasing_in_delta", all(a >= b for a, b in zip(est, est[1:])), est, "nonincreasing")
    out.check("c2_positive", fit.c2 > 0, fit.c2, 0.0)
    out.check("fit_r_squared", fit.r_squared >= p["r2_min"], fit.r_squared, p["r2_min"])
    if p["refine"]:
        finer = E.sup_tail_fit(p["deltas"], p["resolution"] / 2, p["reps"], seed, p["d"], workers)
        out.payload["refined_fit"] = finer.as_dict()
        out.payload["refinement_c2_change"] = finer.c2 / fit.c2 - 1.0
    return out


# ---------------------------------------------------------------------------
# theorem11-desk
# ---------------------------------------------------------------------------


def _v_t11(p):
    _require(len(p["times"]) == 2 and all(t > 0 for t in p["times"]), "times must be two positive values")
    _positive(p, "windows", "resolution")
    _require(p["reps"] >= 100 and p["d"] >= 1, "reps >= 100 and d >= 1 required")
    for t in p["times"]:
        _require(p["resolution"] * math.sqrt(t) <= 0.1 * t**0.25 * (1 + 1e-12),
                 f"resolution too coarse at t={t}: need resolution * sqrt(t) <= 0.1 * t^(1/4)")


@experiment("theorem11-desk", "scaled spatial infimum quantiles at two times", {
    "times": [1.0, 16.0],
    "windows": [1.0, 2.0],
    "resolution": 0.05,
    "reps": 1000,
    "d": 7,
    "z_max": 3.0,
    "refine": False,
})
@validator(_v_t11)
def run_theorem11(p, seed, workers):
    out = Outcome()
    # independent draws at the two times: seed and seed + 1
    res = {t: E.inf_scaled_quantiles(t, p["windows"], p["resolution"], p["reps"], seed + k, p["d"], workers=workers)
           for k, t in enumerate(p["times"])}
    rows = [(t, L, q, v, se) for t, byL in res.items() for L, qs in byL.items() for q, v, se in qs]
    out.table("quantiles", ["t", "window", "level", "quantile", "stderr"], rows)
    ok_order = all(qs[0][1] >= 0 and all(a[1] <= b[1] for a, b in zip(qs, qs[1:]))
                   for byL in res.values() for qs in byL.values())
    out.check("quantiles_nonnegative_ordered", ok_order, ok_order, True)
    t1, t2 = p["times"]
    for L in res[t1]:
        zs = [(a[1] - b[1]) / math.hypot(a[2], b[2]) for a, b in zip(res[t1][L], res[t2][L])]
        out.check(f"scaling_agreement_L={L}", max(abs(z) for z in zs) <= p["z_max"], [_f(z) for z in zs], p["z_max"])
    windows = sorted(res[t1])
    mono = all(res[t][big][i][1] <= res[t][small][i][1]
               for t in res for small, big in zip(windows, windows[1:]) for i in range(len(res[t][small])))
    out.check("window_monotone", mono, mono, True)
    if p["refine"]:
        finer = E.inf_scaled_quantiles(t1, windows[0], p["resolution"] / 2, p["reps"], seed, p["d"], workers=workers)
        out.payload["refinement_rel_change"] = [_f(a[1] / b[1] - 1.0) for a, b in zip(res[t1][windows[0]], finer[windows[0]])]
    return out


# ---------------------------------------------------------------------------
# theorem12-desk
# ---------------------------------------------------------------------------


def _v_t12(p):
    _require(all(n >= 2 for n in p["N"]), "N values must be >= 2")
    _positive(p, "alpha", "deltas")
    _require(p["reps"] >= 100 and p["d"] >= 1, "reps >= 100 and d >= 1 required")
    for n in p["N"]:
        try:
            C.lattice_points(n, p["alpha"])
        except C.LatticeTooLarge as exc:
            raise ConfigError(str(exc)) from None


@experiment("theorem12-desk", "union of lattice small-ball events in d = 6", {
    "N": [3, 4, 5],
    "alpha": 1.0 / 6.0,
    "d": 6,
    "deltas": [0.45, 0.9],
    "reps": 2000,
})
@validator(_v_t12)
def run_theorem12(p, seed, workers):
    out = Outcome()
    deltas = sorted(p["deltas"])
    rows = []
    for N in p["N"]:
        lat = C.lattice_points(N, p["alpha"])
        t = lat.points[:, 0]
        est = E.mc_event_counts(lat.points, p["d"], [dl * t ** -p["alpha"] for dl in deltas], "any", p["reps"], seed, workers)
        for dl, e in zip(deltas, est):
            rows.append((N, len(t), dl, e.estimate, e.stderr, *e.ci95, e.hits))
        out.check(f"union_hit_N={N}", est[-1].hits > 0, est[-1].estimate, "> 0")
        vals = [e.estimate for e in est]
        out.check(f"nondecreasing_in_delta_N={N}", all(a <= b for a, b in zip(vals, vals[1:])), vals, "nondecreasing")
    out.table("union_estimates", ["N", "points", "delta", "estimate", "stderr", "ci_lo", "ci_hi", "hits"], rows)
    return out


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------


def _v_constructions(p):
    _require(all(0 < a < 0.25 for a in p["tn_alphas"] + [p["grid_alpha"]]), "alphas must lie in (0, 1/4)")
    _require(p["tn_nmax"] >= 2, "tn_nmax must be >= 2")
    _require(p["grid_d"] >= 7 and p["tiling_d"] >= 7, "grid dimensions must be >= 7")
    _require(len(p["truncations"]) == 2 and 1 <= p["truncations"][0] < p["truncations"][1], "need two increasing truncations")
    _require(all(n >= 2 for n in p["first_order_N"]), "first_order_N must be >= 2")


@experiment("constructions", "t_n sequence, grids, partial sums and first-order integrals", {
    "tn_alphas": [0.05, 0.125, 0.2, 0.24],
    "tn_nmax": 100_000,
    "grid_alpha": 0.125,
    "grid_d": 7,
    "tiling_d": 24,
    "tiling_cells": [[1, 0], [4, 1], [9, 2]],
    "per_term_small": [50, 10],
    "per_term_large": [500, 100],
    "truncations": [1000, 4000],
    "partial_delta": 1.0,
    "partial_rtol": 0.02,
    "oscillation_c2": 0.3,
    "first_order_N": [10, 100, 1000],
    "first_order_tol": 1e-6,
})
@validator(_v_constructions)
def run_constructions(p, seed, workers):
    out = Outcome()
    rows = []
    for a in p["tn_alphas"]:
        tn = C.tn_sequence(a, p["tn_nmax"])
        rows.append((a, tn.r, tn.c, tn.min_log_margin, tn.min_ratio, tn.lower_bound_holds, tn.ratio_holds))
        out.check(f"tn_bounds_alpha={a}", tn.lower_bound_holds and tn.ratio_holds, [tn.min_log_margin, tn.min_ratio], [0.0, 0.5])
    out.table("tn_sequence", ["alpha", "r", "c", "min_log_margin", "min_ratio", "lower_bound_holds", "ratio_holds"], rows)

    a, d = p["grid_alpha"], p["grid_d"]
    g = C.grid_points(a, d, 1, 0)
    out.check("grid_first_cell", g.m == 1 and g.corner_points().tolist() == [[2.0, 1.0]], g.corner_points().tolist(), [[2.0, 1.0]])
    tiles = []
    for n, k in p["tiling_cells"]:
        gs = C.grid_points(a, p["tiling_d"], int(n), int(k))
        R = gs.sub_rectangles()
        area = float(np.sum((R[:, 1] - R[:, 0]) * (R[:, 3] - R[:, 2])))
        full = (gs.t_hi - gs.t_lo) * (gs.x_hi - gs.x_lo)
        inside = bool(np.all(R[:, 0] >= gs.t_lo - 1e-9) and np.all(R[:, 1] <= gs.t_hi + 1e-9)
                      and np.all(R[:, 2] >= gs.x_lo - 1e-9) and np.all(R[:, 3] <= gs.x_hi + 1e-9))
        tiles.append((n, k, gs.m, len(R), area, full, inside))
        out.check(f"tiling_n={n}_k={k}", inside and math.isclose(area, full, rel_tol=1e-9) and len(R) == gs.m**3,
                  {"rectangles": len(R), "area": area}, {"rectangles": gs.m**3, "area": full})
    out.table("tiling", ["n", "k", "m", "rectangles", "area_sum", "cell_area", "inside"], tiles)

    tn = C.tn_sequence(a, p["per_term_large"][0] + 2)
    small = max(C.per_term_ratio(a, d, n, k, tn) for n in range(1, p["per_term_small"][0] + 1)
                for k in range(p["per_term_small"][1] + 1))
    large = max(C.per_term_ratio(a, d, n, k, tn) for n in range(1, p["per_term_large"][0] + 1)
                for k in range(p["per_term_large"][1] + 1))
    out.payload["per_term"] = {"small_sweep_max": small, "large_sweep_max": large, "frozen_C": C.PER_TERM_C}
    out.check("per_term_bound", large <= C.PER_TERM_C, large, C.PER_TERM_C)

    n1, n2 = p["truncations"]
    sums = []
    for kind in ("smallball", "oscillation"):
        s1 = C.grid_bound_partial_sum(kind, a, d, p["partial_delta"], n1, n1, p["oscillation_c2"])
        s2 = C.grid_bound_partial_sum(kind, a, d, p["partial_delta"], n2, n2, p["oscillation_c2"])
        sums.append((kind, n1, s1.total, s1.majorant_total, n2, s2.total, s2.majorant_total, s2.total / s1.total - 1.0))
        if kind == "smallball":
            rel = s2.total / s1.total - 1.0
            out.check("smallball_partial_sum_convergence", abs(rel) <= p["partial_rtol"], rel, p["partial_rtol"])
    out.table("partial_sums", ["kind", "trunc_1", "sum_1", "majorant_1", "trunc_2", "sum_2", "majorant_2", "rel_change"], sums)

    fo = []
    for N in p["first_order_N"]:
        quad, closed = C.first_order_integral(N, 1.0 / 6.0), C.first_order_closed_form(N)
        fo.append((N, quad, closed, abs(quad - closed), closed / math.log(N)))
    out.table("first_order", ["N", "quadrature", "closed_form", "abs_diff", "closed_over_logN"], fo)
    worst = max(r[3] for r in fo)
    out.check("first_order_closed_form", worst <= p["first_order_tol"], worst, p["first_order_tol"])
    ratios = [r[4] for r in fo]
    out.check("first_order_over_logN", all(0.3 <= v <= 1 for v in ratios) and all(x < y for x, y in zip(ratios, ratios[1:])),
              ratios, "[0.3, 1], increasing")
    lat_sum, integral = C.first_order_sum(10, 1.0 / 6.0)
    out.payload["first_order_lattice_N10"] = {"lattice_sum": lat_sum, "integral": integral, "ratio": lat_sum / integral}
    out.check("lattice_sum_comparable", 0.3 <= lat_sum / integral <= 3, lat_sum / integral, [0.3, 3])
    return out


# ---------------------------------------------------------------------------
# lemma42 / lemma43
# ---------------------------------------------------------------------------


def _v_l42(p):
    _require(all(a >= 1 for a in p["alphas"]), "alphas must be positive integers")
    _require(2 <= p["N_min"] <= p["N_max"], "need 2 <= N_min <= N_max")


@experiment("lemma42", "growth inequality for the lattice spacing", {
    "alphas": [1, 2, 3],
    "N_min": 2,
    "N_max": 1000,
})
@validator(_v_l42)
def run_lemma42(p, seed, workers):
    out = Outcome()
    rows = []
    for a in p["alphas"]:
        try:
            res = [C.lemma42_margin(a, N) for N in range(p["N_min"], p["N_max"] + 1)]
        except OverflowError as exc:
            raise ConfigError(str(exc)) from None
        holds = all(r.holds for r in res)
        incr = all(x.log_lhs < y.log_lhs for x, y in zip(res, res[1:]))
        margin = min(r.log_bound - r.log_lhs for r in res)
        rows.extend((a, r.N, r.lhs, r.bound, r.holds) for r in res)
        out.check(f"holds_alpha={a}", holds, margin, "log margin >= 0")
        out.check(f"lhs_increasing_alpha={a}", incr, incr, True)
    out.table("lemma42", ["alpha", "N", "lhs", "bound", "holds"], rows)
    return out


def _v_l43(p):
    _require(p["trials"] >= 1, "trials must be >= 1")


@experiment("lemma43", "second-moment union bound against brute force", {"trials": 1000})
@validator(_v_l43)
def run_lemma43(p, seed, workers):
    out = Outcome()
    trials = C.lemma43_trials(p["trials"], seed)
    keys = ["trial", "events", "atoms", "bound", "union", "disjoint", "holds", "tight"]
    out.table("lemma43", keys, [[r[k] for k in keys] for r in trials])
    out.payload["comparisons"] = len(trials)
    out.payload["disjoint_cases"] = sum(r["disjoint"] for r in trials)
    bad = [r["trial"] for r in trials if not r["holds"]]
    out.check("bound_below_union", not bad, len(bad), 0)
    loose = [r["trial"] for r in trials if not r["tight"]]
    out.check("tight_when_disjoint", not loose, len(loose), 0)
    return out
