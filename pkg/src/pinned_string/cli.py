"""
Command-line runner.

    pinned-string run <experiment> [--config PATH] [--seed N] [--out DIR]
                      [--workers N] [--param key=value ...]
    pinned-string list

The config file is a flat JSON object of experiment parameters; it may also
carry ``seed``, ``workers`` and ``out``.  Command-line flags override it and
``--param`` values are parsed as JSON (falling back to a plain string).

Exit status: 0 when every check passes, 1 when a check fails (the failing
checks are named on stderr), 2 for usage or configuration errors.  Nothing
is written when the configuration is rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import REGISTRY, ConfigError, resolve_params
from .sampler import RNG_ID, _check_seed

DEFAULT_SEED = 20240917
RESERVED = ("seed", "workers", "out")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _parse_param(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinned-string", description="Pinned-string simulation and verification runner")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a named experiment")
    run.add_argument("experiment", choices=sorted(REGISTRY), metavar="experiment",
                     help="one of: " + ", ".join(sorted(REGISTRY)))
    run.add_argument("--config", type=Path, help="JSON file with a flat parameter map")
    run.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    run.add_argument("--out", type=Path, help="output directory (default runs/<experiment>)")
    run.add_argument("--workers", type=int, help="worker threads (default 1)")
    run.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
    sub.add_parser("list", help="list experiments")
    return ap


def _resolve(args):
    exp = REGISTRY[args.experiment]
    fields = {}
    if args.config is not None:
        try:
            fields = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(fields, dict):
            raise ConfigError("config must be a JSON object")
    fields = dict(fields)
    fields.update(_parse_param(p) for p in args.param)
    for key, flag in (("seed", args.seed), ("workers", args.workers), ("out", args.out)):
        if flag is not None:
            fields[key] = str(flag) if key == "out" else flag
    seed = fields.pop("seed", DEFAULT_SEED)
    workers = fields.pop("workers", 1)
    out = Path(fields.pop("out", Path("runs") / exp.name))
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    try:
        seed = _check_seed(seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")
    params = resolve_params(exp, fields)
    return exp, params, seed, workers, out


def run(args) -> int:
    try:
        exp, params, seed, workers, out = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    outcome = exp.run(params, seed, workers)
    elapsed = time.perf_counter() - start

    out.mkdir(parents=True, exist_ok=True)
    tables = []
    for t in outcome.tables:
        name = f"{t.name}.csv"
        write_csv(out / name, t.header, t.rows)
        tables.append({"name": t.name, "file": name, "columns": t.header, "rows": len(t.rows)})
    failed = [c.name for c in outcome.checks if not c.passed]
    report = {
        "tool": "pinned-string",
        "tool_version": __version__,
        "experiment": exp.name,
        "rng_id": RNG_ID,
        "config": {"params": params, "seed": seed, "workers": workers},
        "status": "fail" if failed else "pass",
        "checks": [c.as_dict() for c in outcome.checks],
        "failed_checks": failed,
        "tables": tables,
        "payload": outcome.payload,
        "wall_clock_seconds": elapsed,
    }
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    (out / "report.json").write_text(text + "\n", encoding="utf-8")

    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: measured={_jsonable(c.measured)} threshold={_jsonable(c.threshold)}")
    print(f"report: {out / 'report.json'}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(REGISTRY):
            print(f"{name:18s} {REGISTRY[name].summary}")
        return 0
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
