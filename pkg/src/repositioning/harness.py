"""Experiment orchestration: common traces, regret metrics, CSV output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from repositioning import __version__
from repositioning.baselines import OtlConfig, run_dl_uncensored, run_fixed, run_nr, run_otl
from repositioning.datagen import (
    Scenario,
    ScenarioSpec,
    Trace,
    atomic_write_text,
    build_scenario,
    gen_trace,
    read_trace,
    rng_stream,
)
from repositioning.domain import InventoryVector, NetworkConfig
from repositioning.episode import EpisodeResult
from repositioning.lp import LpError
from repositioning.milp import MilpError
from repositioning.offline import History, OfflineSolution, SolverKind, best_base_stock_saa, solve_offline
from repositioning.soar import run_soar, run_soar_extended

ALGORITHMS = ("SOAR", "SOAR-Extended", "NR", "OTL-LP", "OTL-MILP", "DL")
RUN_COLUMNS = (
    "run",
    "algorithm",
    "period",
    "cumulative_cost",
    "cumulative_regret",
    "relative_regret_pct",
    "cumulative_pseudoregret",
)


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Benchmark:
    kind: str = "SAA"
    m: int = 2000
    vector: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("SAA", "FixedS"):
            raise ConfigError(f"unknown benchmark kind {self.kind!r}")
        if self.kind == "SAA" and self.m < 1:
            raise ConfigError("SAA sample count must be positive")
        if self.kind == "FixedS" and not self.vector:
            raise ConfigError("FixedS benchmark needs a vector")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    T: int
    runs: int = 1
    algorithms: tuple[str, ...] = ("SOAR", "NR")
    benchmark: Benchmark = field(default_factory=Benchmark)
    output_dir: str = "results"
    otl_exploration: int = 20
    step_scale: float = 1.0
    parallel: int = 1
    trace_file: str | None = None

    def __post_init__(self) -> None:
        if self.T < 1 or self.runs < 1:
            raise ConfigError("T and runs must be at least 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if self.parallel < 1:
            raise ConfigError("parallel must be at least 1")
        if self.benchmark.kind == "FixedS" and len(self.benchmark.vector) != self.scenario.n:
            raise ConfigError("FixedS vector length must equal n")

    def to_dict(self) -> dict:
        bench = {"kind": self.benchmark.kind}
        if self.benchmark.kind == "SAA":
            bench["m"] = self.benchmark.m
        else:
            bench["vector"] = list(self.benchmark.vector)
        return {
            "scenario": self.scenario.to_dict(),
            "T": self.T,
            "runs": self.runs,
            "algorithms": list(self.algorithms),
            "benchmark": bench,
            "output_dir": self.output_dir,
            "otl_exploration": self.otl_exploration,
            "step_scale": self.step_scale,
            "parallel": self.parallel,
            "trace_file": self.trace_file,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        try:
            bench = data.get("benchmark", {})
            vector = bench.get("vector")
            return cls(
                scenario=ScenarioSpec.from_dict(data["scenario"]),
                T=int(data["T"]),
                runs=int(data.get("runs", 1)),
                algorithms=tuple(data.get("algorithms", ("SOAR", "NR"))),
                benchmark=Benchmark(bench.get("kind", "SAA"), int(bench.get("m", 2000)), None if vector is None else tuple(map(float, vector))),
                output_dir=str(data.get("output_dir", "results")),
                otl_exploration=int(data.get("otl_exploration", 20)),
                step_scale=float(data.get("step_scale", 1.0)),
                parallel=int(data.get("parallel", 1)),
                trace_file=data.get("trace_file"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc


# ---------------------------------------------------------------------------
# metrics


def compute_regret_series(alg: EpisodeResult, bench: EpisodeResult) -> np.ndarray:
    """Cumulative regret per period against a benchmark run on the same trace."""
    if alg.horizon != bench.horizon:
        raise ValueError("episodes have different horizons")
    if not np.allclose(alg.states[0], bench.states[0], rtol=0, atol=1e-12):
        raise ValueError("episodes start from different inventory")
    ka, kb = alg.info.get("trace_key"), bench.info.get("trace_key")
    if ka is not None and kb is not None and ka != kb:
        raise ValueError("episodes were simulated on different traces")
    return np.cumsum(alg.costs - bench.costs)


def relative_regret(regret_T, bench_cumulative):
    """100 * regret / |benchmark cumulative cost|."""
    return 100.0 * np.asarray(regret_T, dtype=float) / np.abs(np.asarray(bench_cumulative, dtype=float))


def aggregate_ci(values: Sequence[float]) -> tuple[float, float]:
    """Mean and the 95% normal half width 1.96 * sd / sqrt(runs)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


def trace_key(trace: Trace | Sequence) -> str:
    periods = trace.periods if isinstance(trace, Trace) else trace
    h = hashlib.sha256()
    for p in periods:
        for s in (p if isinstance(p, (list, tuple)) else (p,)):
            h.update(s.demand.tobytes())
            h.update(s.od_matrix.tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# benchmark


_BENCH_CACHE: dict[tuple, OfflineSolution] = {}


def benchmark_solution(cfg: ExperimentConfig, scenario: Scenario, custom: Trace | None = None) -> OfflineSolution:
    """The base-stock level used as OPT; SAA results are cached per scenario seed."""
    n = scenario.spec.n
    if cfg.benchmark.kind == "FixedS":
        S = np.asarray(cfg.benchmark.vector, dtype=float)
        return OfflineSolution(InventoryVector(S, float(S.sum())), float("nan"), SolverKind.LP, 0.0)
    key = (json.dumps(scenario.spec.to_dict(), sort_keys=True), cfg.benchmark.m, None if custom is None else trace_key(custom))
    if key not in _BENCH_CACHE:
        rng = rng_stream(scenario.spec.seed, "saa")
        if custom is None:
            sampler = scenario.sample_period
        else:
            periods = custom.periods

            def sampler(r: np.random.Generator):
                return periods[int(r.integers(len(periods)))]

        _BENCH_CACHE[key] = best_base_stock_saa(sampler, cfg.benchmark.m, scenario.cfg, rng, total=1.0)
    return _BENCH_CACHE[key]


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunOutcome:
    run: int
    episodes: dict[str, EpisodeResult]
    bench: EpisodeResult | None
    error: str | None = None


def _run_algorithm(name: str, periods: Sequence, x1: InventoryVector, net: NetworkConfig, cfg: ExperimentConfig, run: int) -> EpisodeResult:
    extended = isinstance(periods[0], (list, tuple))
    if name in ("SOAR", "SOAR-Extended"):
        if extended:
            ep = run_soar_extended(periods, x1, net, step_scale=cfg.step_scale, seed=run)
        else:
            ep = run_soar(periods, x1, net, step_scale=cfg.step_scale, seed=run)
    elif name == "NR":
        ep = run_nr(periods, x1, net, seed=run)
    elif name in ("OTL-LP", "OTL-MILP"):
        method = "lp" if name == "OTL-LP" else "milp"
        ep = run_otl(periods, x1, net, OtlConfig(cfg.otl_exploration, method=method), seed=run)
    elif name == "DL":
        ep = run_dl_uncensored(periods, x1, net, seed=run)
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(name)
    return replace(ep, algorithm=name)


def simulate_run(cfg: ExperimentConfig, run: int, S: InventoryVector, custom: Trace | None = None) -> RunOutcome:
    """All requested algorithms plus the benchmark on one common trace."""
    import warnings

    scenario = build_scenario(cfg.scenario)
    trace = custom if custom is not None else gen_trace(scenario, cfg.T, run)
    periods = trace.periods[: cfg.T]
    key = trace_key(periods)
    x1 = InventoryVector.uniform(cfg.scenario.n)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bench = run_fixed(periods, x1, S, scenario.cfg, seed=run)
            bench.info["trace_key"] = key
            episodes = {}
            for name in cfg.algorithms:
                ep = _run_algorithm(name, periods, x1, scenario.cfg, cfg, run)
                ep.info["trace_key"] = key
                episodes[name] = ep
    except (LpError, MilpError) as exc:
        return RunOutcome(run, {}, None, f"{type(exc).__name__}: {exc}")
    return RunOutcome(run, episodes, bench)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunMetrics:
    """Per-run regret series keyed by algorithm."""

    cumulative_cost: dict[str, np.ndarray]
    regret: dict[str, np.ndarray]
    relative: dict[str, np.ndarray]
    pseudo: dict[str, np.ndarray]


def run_metrics(out: RunOutcome, expected_cost: float) -> RunMetrics:
    bench_cum = np.cumsum(out.bench.costs)
    periods = np.arange(1, out.bench.horizon + 1)
    cc, rg, rel, ps = {}, {}, {}, {}
    for name, ep in out.episodes.items():
        cc[name] = np.cumsum(ep.costs)
        rg[name] = compute_regret_series(ep, out.bench)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel[name] = np.where(bench_cum != 0, relative_regret(rg[name], bench_cum), 0.0)
        ps[name] = cc[name] - periods * expected_cost
    return RunMetrics(cc, rg, rel, ps)


def _public_info(ep: EpisodeResult) -> dict:
    return {k: v for k, v in ep.info.items() if k != "trace_key"}


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Simulate every run, write per-run CSVs, a summary CSV and a manifest."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = build_scenario(cfg.scenario)
    custom = None
    if cfg.trace_file is not None:
        custom = read_trace(cfg.trace_file)
        if len(custom) < cfg.T:
            raise ConfigError("trace file is shorter than T")
        if custom.scenario.n != cfg.scenario.n:
            raise ConfigError("trace file dimension does not match the scenario")
    otl = [a for a in cfg.algorithms if a.startswith("OTL")]
    if otl and cfg.T <= cfg.scenario.n * cfg.otl_exploration:
        raise ConfigError(f"T must exceed n * otl_exploration = {cfg.scenario.n * cfg.otl_exploration} for OTL")
    if otl and cfg.scenario.extended is not None:
        raise ConfigError("OTL is defined for single-period traces only")
    try:
        sol = benchmark_solution(cfg, scenario, custom)
    except (LpError, MilpError) as exc:
        raise SolverFailure(f"benchmark solve failed: {exc}") from exc
    m = cfg.benchmark.m if cfg.benchmark.kind == "SAA" else 1
    expected = sol.objective / m if cfg.benchmark.kind == "SAA" else float("nan")

    if cfg.parallel > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            outcomes = list(pool.map(simulate_run, [cfg] * cfg.runs, range(cfg.runs), [sol.base_stock] * cfg.runs, [custom] * cfg.runs))
    else:
        outcomes = [simulate_run(cfg, r, sol.base_stock, custom) for r in range(cfg.runs)]

    good = [o for o in outcomes if o.error is None]
    metrics = {o.run: run_metrics(o, expected) for o in good}
    runs_dir = out_dir / "runs"
    traj_dir = out_dir / "trajectories"
    for o in good:
        mt = metrics[o.run]
        rows = []
        for name in cfg.algorithms:
            for t in range(cfg.T):
                rows.append([o.run, name, t + 1, mt.cumulative_cost[name][t], mt.regret[name][t], mt.relative[name][t], mt.pseudo[name][t]])
        atomic_write_text(runs_dir / f"run_{o.run:03d}.csv", _csv_text(RUN_COLUMNS, rows))
        n = cfg.scenario.n
        header = ["period", *[f"y_{i + 1}" for i in range(n)], "surrogate_cost", "realized_cost"]
        for name, ep in o.episodes.items():
            atomic_write_text(traj_dir / f"run_{o.run:03d}_{name}.csv", _csv_text(header, ep.trajectory_rows()))

    summary_rows = []
    for name in cfg.algorithms:
        for t in range(cfg.T):
            vals = {
                "cost": [metrics[o.run].cumulative_cost[name][t] for o in good],
                "regret": [metrics[o.run].regret[name][t] for o in good],
                "relative": [metrics[o.run].relative[name][t] for o in good],
                "pseudo": [metrics[o.run].pseudo[name][t] for o in good],
            }
            if not good:
                continue
            row = [name, t + 1, len(good)]
            for k in ("cost", "regret", "relative", "pseudo"):
                row.extend(aggregate_ci(vals[k]))
            summary_rows.append(row)
    summary_header = [
        "algorithm",
        "period",
        "runs",
        "mean_cumulative_cost",
        "ci_cumulative_cost",
        "mean_cumulative_regret",
        "ci_cumulative_regret",
        "mean_relative_regret_pct",
        "ci_relative_regret_pct",
        "mean_cumulative_pseudoregret",
        "ci_cumulative_pseudoregret",
    ]
    atomic_write_text(out_dir / "summary.csv", _csv_text(summary_header, summary_rows))

    manifest = {
        "version": _version(),
        "config": cfg.to_dict(),
        "scenario_seed": cfg.scenario.seed,
        "run_seeds": [{"run": r, "trace_stream": ["trace", r]} for r in range(cfg.runs)],
        "benchmark": {**sol.to_dict(), "expected_period_cost": expected},
        "runs": [
            {
                "run": o.run,
                "status": "ok" if o.error is None else "failed",
                "error": o.error,
                "info": {} if o.error else {k: _public_info(ep) for k, ep in o.episodes.items()},
            }
            for o in outcomes
        ],
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir


def failed_runs(out_dir: str | os.PathLike) -> list[int]:
    data = json.loads((Path(out_dir) / "manifest.json").read_text())
    return [r["run"] for r in data["runs"] if r["status"] != "ok"]
