"""Command-line entry point: generate, solve-offline, run, twins."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from repositioning.datagen import (
    ScenarioSpec,
    TraceFormatError,
    atomic_write_text,
    build_scenario,
    censoring_twins,
    empirical_law,
    gen_trace,
    read_trace,
    rng_stream,
    total_variation,
    write_trace,
)
from repositioning.harness import ALGORITHMS, ConfigError, ExperimentConfig, SolverFailure, failed_runs, run_experiment
from repositioning.lp import LpError
from repositioning.milp import MilpError
from repositioning.offline import History, solve_offline

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
log = logging.getLogger("repositioning")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _with_seed(data: dict, seed: int | None) -> dict:
    if seed is None:
        return data
    scen = dict(data.get("scenario", {}))
    scen["seed"] = seed
    return {**data, "scenario": scen}


def cmd_generate(args: argparse.Namespace) -> int:
    """Config: {"scenario": {...}, "T": int, "runs": int}. Writes trace_run<k>.json."""
    data = _with_seed(_load_json(args.config), args.seed)
    try:
        spec = ScenarioSpec.from_dict(data["scenario"])
        T, runs = int(data["T"]), int(data.get("runs", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generate config: {exc}") from exc
    if T < 1 or runs < 1:
        raise ConfigError("T and runs must be at least 1")
    out = Path(args.out or "traces")
    out.mkdir(parents=True, exist_ok=True)
    scenario = build_scenario(spec)
    for r in range(runs):
        write_trace(gen_trace(scenario, T, r), out / f"trace_run{r:03d}.json")
    print(f"wrote {runs} trace(s) to {out}")
    return EXIT_OK


def cmd_solve_offline(args: argparse.Namespace) -> int:
    try:
        trace = read_trace(args.trace)
    except (OSError, TraceFormatError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg = build_scenario(trace.scenario).cfg
    sol = solve_offline(History(trace.periods), cfg, args.method)
    text = sol.to_json()
    if args.out:
        atomic_write_text(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    data = _with_seed(_load_json(args.config), args.seed)
    cfg = ExperimentConfig.from_dict(data)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.algorithms:
        algs = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        cfg = replace(cfg, algorithms=algs)
    if args.parallel:
        cfg = replace(cfg, parallel=args.parallel)
    out = run_experiment(cfg)
    failed = failed_runs(out)
    print(f"results in {out}")
    if failed:
        log.error("runs %s failed; see manifest.json", failed)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_twins(args: argparse.Namespace) -> int:
    """Censored laws of the two twins agree at every policy in the simplex; joint laws do not."""
    a, b = censoring_twins(args.c, args.p1, args.p2)
    rng = rng_stream(args.seed if args.seed is not None else 0, "twins")
    da, db = a.sample(rng, args.samples), b.sample(rng, args.samples)
    grid = np.round(np.arange(0.0, 1.0 + 1e-9, args.step), 10)
    rows = ["x0,y0,tv_censored"]
    worst = 0.0
    for x0 in grid:
        y0 = float(np.round(1.0 - x0, 10))
        la = empirical_law(np.minimum(da, [x0, y0]))
        lb = empirical_law(np.minimum(db, [x0, y0]))
        tv = float(total_variation(la, lb))
        worst = max(worst, tv)
        rows.append(f"{float(x0)!r},{y0!r},{tv!r}")
    joint = total_variation(a.joint_law(), b.joint_law())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "twins.csv", "\n".join(rows) + "\n")
    print(f"max censored TV {worst:.4f}; joint TV {joint:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repositioning", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write trace files for a scenario")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve-offline", help="solve the offline problem on a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--method", choices=["auto", "lp", "milp", "grid"], default="auto")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve_offline)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--algorithms", help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    r.add_argument("--parallel", type=int)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("twins", help="censoring indistinguishability demo")
    t.add_argument("--c", type=float, default=0.7)
    t.add_argument("--p1", type=float, default=0.1)
    t.add_argument("--p2", type=float, default=0.4)
    t.add_argument("--samples", type=int, default=100_000)
    t.add_argument("--step", type=float, default=0.05)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_twins)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, LpError, MilpError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
