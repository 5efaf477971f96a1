"""Synthetic instances and traces, the censoring twins, and trace file I/O."""

from __future__ import annotations

import enum
import json
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from repositioning.domain import DemandSample, NetworkConfig, SubperiodSample

SCHEMA_VERSION = 1


class DemandMode(enum.Enum):
    INDEPENDENT = "IndependentUniform"
    CORRELATED = "CorrelatedTruncatedGaussian"


class CostMode(enum.Enum):
    HIGH_LOST_SALES = "HighLostSales"
    HIGH_REPOSITIONING = "HighRepositioning"


def rng_stream(seed: int, *keys: str | int) -> np.random.Generator:
    """Independent generator for a named purpose, stable across code changes."""
    spawn = tuple(k if isinstance(k, int) else zlib.crc32(k.encode()) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn)))


@dataclass(frozen=True)
class ExtendedSpec:
    H: int
    od_scale_range: tuple[float, float] = (0.80, 0.99)

    def __post_init__(self) -> None:
        lo, hi = self.od_scale_range
        if self.H < 1:
            raise ValueError("H must be at least 1")
        if not 0 < lo <= hi <= 1:
            raise ValueError("od_scale_range must satisfy 0 < lo <= hi <= 1")
        object.__setattr__(self, "od_scale_range", (float(lo), float(hi)))


@dataclass(frozen=True)
class ScenarioSpec:
    n: int
    demand_mode: DemandMode = DemandMode.INDEPENDENT
    cost_mode: CostMode = CostMode.HIGH_LOST_SALES
    seed: int = 0
    extended: ExtendedSpec | None = None
    fixed_od: bool = False

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "demand_mode", DemandMode(self.demand_mode))
        object.__setattr__(self, "cost_mode", CostMode(self.cost_mode))

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "demand_mode": self.demand_mode.value,
            "cost_mode": self.cost_mode.value,
            "seed": self.seed,
            "fixed_od": self.fixed_od,
        }
        if self.extended is not None:
            out["extended"] = {"H": self.extended.H, "od_scale_range": list(self.extended.od_scale_range)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioSpec:
        ext = data.get("extended")
        return cls(
            n=int(data["n"]),
            demand_mode=DemandMode(data.get("demand_mode", DemandMode.INDEPENDENT.value)),
            cost_mode=CostMode(data.get("cost_mode", CostMode.HIGH_LOST_SALES.value)),
            seed=int(data.get("seed", 0)),
            extended=None if ext is None else ExtendedSpec(int(ext["H"]), tuple(ext.get("od_scale_range", (0.8, 0.99)))),
            fixed_od=bool(data.get("fixed_od", False)),
        )


# ---------------------------------------------------------------------------
# primitive generators


def gen_transition_matrix(n: int, rng: np.random.Generator, *, heavy_mean: float = 10.0, diag_boost: float = 10.0) -> np.ndarray:
    """Columns 1-2 exponential, the rest uniform, diagonal boosted, rows normalized."""
    P = rng.uniform(0.0, 1.0, size=(n, n))
    heavy = min(2, n)
    P[:, :heavy] = rng.exponential(heavy_mean, size=(n, heavy))
    P[np.diag_indices(n)] *= diag_boost
    return P / P.sum(axis=1, keepdims=True)


def gen_demand_independent(n: int, rng: np.random.Generator) -> np.ndarray:
    i = np.arange(1, n + 1)
    return rng.uniform(0.3 * i / n, 0.6 * (i + 1) / n)


def gen_correlation_factor(n: int, rng: np.random.Generator) -> np.ndarray:
    """The matrix A of the covariance 10 A'A; drawn once per scenario."""
    return rng.uniform(0.0, 1.0, size=(n, n))


def correlated_bounds(n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, n + 1)
    return 0.2 + 0.2 * i / n, 0.4 + 0.8 * i / n


def gen_demand_correlated(n: int, rng: np.random.Generator, A: np.ndarray | None = None) -> np.ndarray:
    """Gaussian with mean 2/n and covariance 10 A'A, clamped into per-location bands."""
    if A is None:
        A = gen_correlation_factor(n, rng)
    v = 2.0 / n + np.sqrt(10.0) * (A.T @ rng.standard_normal(n))
    lo, hi = correlated_bounds(n)
    return np.clip(v, lo, hi)


def gen_costs(n: int, mode: CostMode | str, rng: np.random.Generator) -> NetworkConfig:
    mode = CostMode(mode)
    l = rng.uniform(1.0, 2.0, size=(n, n))
    lo, hi = (0.5, 1.0) if mode is CostMode.HIGH_LOST_SALES else (5.0, 10.0)
    c = rng.uniform(lo, hi, size=(n, n))
    np.fill_diagonal(c, 0.0)
    return NetworkConfig(l, c)


def gen_extended_od(n: int, rng: np.random.Generator, scale_range: tuple[float, float] = (0.80, 0.99)) -> np.ndarray:
    """Row-normalized OD draw (columns 1-2 exponential with mean 5) with rows shrunk by a random factor."""
    P = gen_transition_matrix(n, rng, heavy_mean=5.0, diag_boost=1.0)
    lo, hi = scale_range
    return P * rng.uniform(lo, hi, size=(n, 1))


# ---------------------------------------------------------------------------
# scenarios and traces


@dataclass(frozen=True, eq=False)
class Scenario:
    """A materialized ScenarioSpec: costs and the per-scenario random structure."""

    spec: ScenarioSpec
    cfg: NetworkConfig
    factor: np.ndarray | None
    permutations: np.ndarray | None
    fixed_od: np.ndarray | None

    def sample_period(self, rng: np.random.Generator):
        n = self.spec.n
        ext = self.spec.extended
        if ext is None:
            d = self._demand(rng)
            P = self.fixed_od if self.fixed_od is not None else gen_transition_matrix(n, rng)
            return DemandSample(d, P)
        subs = []
        for h in range(ext.H):
            d = self._demand(rng)
            P = gen_extended_od(n, rng, ext.od_scale_range)
            subs.append(SubperiodSample(d[self.permutations[h]], P))
        return subs

    def _demand(self, rng: np.random.Generator) -> np.ndarray:
        if self.spec.demand_mode is DemandMode.INDEPENDENT:
            return gen_demand_independent(self.spec.n, rng)
        return gen_demand_correlated(self.spec.n, rng, self.factor)


def build_scenario(spec: ScenarioSpec) -> Scenario:
    n = spec.n
    cfg = gen_costs(n, spec.cost_mode, rng_stream(spec.seed, "costs"))
    factor = None
    if spec.demand_mode is DemandMode.CORRELATED:
        factor = gen_correlation_factor(n, rng_stream(spec.seed, "correlation"))
    perms = None
    if spec.extended is not None:
        prng = rng_stream(spec.seed, "permutations")
        perms = np.array([prng.permutation(n) for _ in range(spec.extended.H)])
    fixed = gen_transition_matrix(n, rng_stream(spec.seed, "fixed_od")) if spec.fixed_od else None
    return Scenario(spec, cfg, factor, perms, fixed)


@dataclass(frozen=True, eq=False)
class Trace:
    periods: tuple
    scenario: ScenarioSpec

    def __post_init__(self) -> None:
        periods = tuple(tuple(p) if isinstance(p, (list, tuple)) else p for p in self.periods)
        if not periods:
            raise ValueError("a trace needs at least one period")
        object.__setattr__(self, "periods", periods)

    @property
    def extended(self) -> bool:
        return isinstance(self.periods[0], tuple)

    @property
    def H(self) -> int | None:
        return len(self.periods[0]) if self.extended else None

    def __len__(self) -> int:
        return len(self.periods)

    def __getitem__(self, k):
        return self.periods[k]

    def __iter__(self):
        return iter(self.periods)


def gen_trace(scenario: Scenario, T: int, run: int) -> Trace:
    """Trace for one run; runs of the same scenario use independent streams."""
    rng = rng_stream(scenario.spec.seed, "trace", run)
    return Trace(tuple(scenario.sample_period(rng) for _ in range(T)), scenario.spec)


def gen_extended_trace(
    n: int,
    H: int,
    T: int,
    rng: np.random.Generator,
    *,
    scale_range: tuple[float, float] = (0.80, 0.99),
    factor: np.ndarray | None = None,
    permutations: np.ndarray | None = None,
) -> Trace:
    """Each subperiod draws correlated demand and permutes it by sigma_h."""
    if factor is None:
        factor = gen_correlation_factor(n, rng)
    if permutations is None:
        permutations = np.array([rng.permutation(n) for _ in range(H)])
    spec = ScenarioSpec(n, DemandMode.CORRELATED, CostMode.HIGH_LOST_SALES, 0, ExtendedSpec(H, scale_range))
    scen = Scenario(spec, NetworkConfig(np.ones((n, n)), np.zeros((n, n))), factor, permutations, None)
    return Trace(tuple(scen.sample_period(rng) for _ in range(T)), spec)


# ---------------------------------------------------------------------------
# censoring twins


@dataclass(frozen=True, eq=False)
class TwinLaw:
    """Bivariate law on the four atoms (1,1), (c,c), (1,c), (c,1)."""

    c: float
    p: float
    atoms: np.ndarray = field(init=False)
    probs: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        atoms = np.array([[1.0, 1.0], [self.c, self.c], [1.0, self.c], [self.c, 1.0]])
        probs = np.array([self.p, self.p, 0.5 - self.p, 0.5 - self.p])
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.atoms[rng.choice(4, size=size, p=self.probs)]

    def censored_law(self, x0: float, y0: float) -> dict[tuple[float, float], float]:
        """Exact law of (min(X, x0), min(Y, y0))."""
        out: dict[tuple[float, float], float] = {}
        for (a, b), q in zip(self.atoms, self.probs):
            key = (float(min(a, x0)), float(min(b, y0)))
            out[key] = out.get(key, 0.0) + float(q)
        return out

    def joint_law(self) -> dict[tuple[float, float], float]:
        return {(float(a), float(b)): float(q) for (a, b), q in zip(self.atoms, self.probs)}


def censoring_twins(c: float, p1: float, p2: float) -> tuple[TwinLaw, TwinLaw]:
    """Two different joint laws whose censored laws coincide whenever x0 + y0 = 1."""
    if not 0.5 < c < 1:
        raise ValueError("c must lie in (0.5, 1)")
    for p in (p1, p2):
        if not 0 < p < 0.5:
            raise ValueError("p must lie in (0, 0.5)")
    if p1 == p2:
        raise ValueError("p1 and p2 must differ")
    return TwinLaw(c, p1), TwinLaw(c, p2)


def total_variation(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def empirical_law(points: np.ndarray) -> dict[tuple[float, float], float]:
    keys, counts = np.unique(np.round(points, 12), axis=0, return_counts=True)
    return {(float(k[0]), float(k[1])): c / len(points) for k, c in zip(keys, counts)}


# ---------------------------------------------------------------------------
# trace files


class TraceFormatError(ValueError):
    pass


def trace_to_dict(t: Trace) -> dict:
    out: dict = {"schema_version": SCHEMA_VERSION, "n": t.scenario.n}
    if t.extended:
        out["H"] = t.H
    out["scenario"] = t.scenario.to_dict()

    def one(s) -> dict:
        return {"d": s.demand.tolist(), "P": s.od_matrix.tolist()}

    if t.extended:
        out["periods"] = [{"subperiods": [one(s) for s in p]} for p in t.periods]
    else:
        out["periods"] = [one(p) for p in t.periods]
    return out


def trace_from_dict(data: dict) -> Trace:
    try:
        version = data["schema_version"]
        if version != SCHEMA_VERSION:
            raise TraceFormatError(f"unsupported schema_version {version!r}")
        spec = ScenarioSpec.from_dict(data["scenario"])
        n = int(data["n"])
        if n != spec.n:
            raise TraceFormatError("top-level n disagrees with the scenario")
        periods = []
        for k, p in enumerate(data["periods"]):
            try:
                if "subperiods" in p:
                    periods.append([SubperiodSample(s["d"], s["P"]) for s in p["subperiods"]])
                else:
                    periods.append(DemandSample(p["d"], p["P"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise TraceFormatError(f"period {k}: {exc}") from exc
        trace = Trace(tuple(periods), spec)
        if "H" in data and trace.H != data["H"]:
            raise TraceFormatError("H does not match the number of subperiods")
        return trace
    except KeyError as exc:
        raise TraceFormatError(f"missing field {exc}") from exc


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace(t: Trace, path: str | os.PathLike) -> None:
    # json emits the shortest repr of each float, which round-trips exactly
    atomic_write_text(path, json.dumps(trace_to_dict(t)) + "\n")


def read_trace(path: str | os.PathLike) -> Trace:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise TraceFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg} near {line[max(0, exc.colno - 20):exc.colno + 20]!r}") from exc
    if not isinstance(data, dict):
        raise TraceFormatError(f"{path}: top level must be an object")
    return trace_from_dict(data)


def periods_of(trace: Trace | Sequence) -> Sequence:
    return trace.periods if isinstance(trace, Trace) else trace
