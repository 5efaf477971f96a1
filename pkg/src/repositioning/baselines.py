"""Reference policies: no repositioning, one-time learning, dynamic learning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from repositioning.domain import DemandSample, InventoryVector, NetworkConfig
from repositioning.episode import EpisodeResult
from repositioning.model import modified_cost, simulate_extended_period, state_update
from repositioning.offline import History, OfflineSolution, solve_offline


class UncensoredOracle:
    """Capability granting access to true demand and OD draws of a trace."""

    def __init__(self, trace: Sequence) -> None:
        self._trace = tuple(trace)

    def __len__(self) -> int:
        return len(self._trace)

    def reveal(self, t: int):
        """The full sample of period t (1-indexed)."""
        return self._trace[t - 1]


@dataclass(frozen=True)
class OtlConfig:
    exploration_samples: int = 20
    eta: float = 1.0
    method: str = "auto"

    def __post_init__(self) -> None:
        if self.exploration_samples < 1:
            raise ValueError("exploration_samples must be at least 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.method not in ("auto", "lp", "milp", "grid"):
            raise ValueError(f"unknown offline method {self.method!r}")

    @classmethod
    def from_horizon(cls, T: int, eta: float = 1.0, method: str = "auto") -> OtlConfig:
        """T0 = eta * T^(2/3), the schedule behind the regret bound."""
        return cls(max(1, int(round(eta * T ** (2.0 / 3.0)))), eta, method)


def _simulate(name: str, trace: Sequence, x1: InventoryVector, cfg: NetworkConfig, choose, seed) -> EpisodeResult:
    """Run a policy given by ``choose(t, x) -> y`` (t is 1-indexed)."""
    T, n = len(trace), x1.n
    costs = np.empty(T)
    policies, states = np.empty((T, n)), np.empty((T + 1, n))
    states[0] = x1.values
    x = x1
    for t, period in enumerate(trace, start=1):
        y = choose(t, x)
        policies[t - 1] = y.values
        if isinstance(period, DemandSample):
            costs[t - 1] = modified_cost(x, y, period, cfg)
            x = state_update(y, period)
        else:
            out = simulate_extended_period(x, y, period, cfg)
            costs[t - 1] = out.cost
            x = out.next_state
        states[t] = x.values
    return EpisodeResult(name, costs, policies, states, seed)


def run_nr(trace: Sequence, x1: InventoryVector, cfg: NetworkConfig, *, seed: int | None = None) -> EpisodeResult:
    """Never reposition: y_t = x_t."""
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    return _simulate("NR", trace, x1, cfg, lambda t, x: x, seed)


def run_fixed(trace: Sequence, x1: InventoryVector, S: InventoryVector, cfg: NetworkConfig, *, name: str = "OPT", seed: int | None = None) -> EpisodeResult:
    """Reposition to the base-stock level S every period."""
    return _simulate(name, trace, x1, cfg, lambda t, x: S, seed)


def exploration_period(s: int, i: int, n: int) -> int:
    """Period (1-indexed) of the s-th visit to location i (both 1-indexed)."""
    return n * (s - 1) + i


def otl_synthetic_samples(oracle: UncensoredOracle, n: int, T0: int) -> list[DemandSample]:
    """Assemble T0 pairs: coordinate i and row i come from the period spent at location i."""
    samples = []
    for s in range(1, T0 + 1):
        d = np.empty(n)
        P = np.empty((n, n))
        for i in range(1, n + 1):
            obs = oracle.reveal(exploration_period(s, i, n))
            d[i - 1] = obs.demand[i - 1]
            P[i - 1] = obs.od_matrix[i - 1]
        samples.append(DemandSample(d, P))
    return samples


def run_otl(
    trace: Sequence[DemandSample],
    x1: InventoryVector,
    cfg: NetworkConfig,
    otl: OtlConfig = OtlConfig(),
    oracle: UncensoredOracle | None = None,
    *,
    seed: int | None = None,
) -> EpisodeResult:
    """Explore each location in turn for T0 rounds, then play the offline optimum."""
    n, T0 = x1.n, otl.exploration_samples
    if len(trace) <= n * T0:
        raise ValueError(f"trace of length {len(trace)} is too short for {n * T0} exploration periods")
    oracle = UncensoredOracle(trace) if oracle is None else oracle
    corners = [InventoryVector(np.eye(n)[i] * x1.total, x1.total) for i in range(n)]
    fitted: list[OfflineSolution] = []

    def choose(t: int, x: InventoryVector) -> InventoryVector:
        if t <= n * T0:
            return corners[(t - 1) % n]
        if not fitted:
            h = History(tuple(otl_synthetic_samples(oracle, n, T0)), x1)
            fitted.append(solve_offline(h, cfg, otl.method))
        return fitted[0].base_stock

    ep = _simulate("OTL", trace, x1, cfg, choose, seed)
    kind = fitted[0].solver_kind.value
    ep.info.update({"base_stock": fitted[0].base_stock.values.tolist(), "solver_kind": kind})
    return EpisodeResult(f"OTL-{kind}", ep.costs, ep.policies, ep.states, seed, None, ep.info)


def dl_epochs(T: int) -> list[tuple[int, int]]:
    """Doubling epochs [2^(e-1), min(2^e - 1, T)] covering 1..T."""
    out, e = [], 1
    while 2 ** (e - 1) <= T:
        out.append((2 ** (e - 1), min(2**e - 1, T)))
        e += 1
    return out


def run_dl_uncensored(
    trace: Sequence[DemandSample],
    x1: InventoryVector,
    cfg: NetworkConfig,
    oracle: UncensoredOracle | None = None,
    *,
    method: str = "auto",
    seed: int | None = None,
) -> EpisodeResult:
    """Re-solve the offline problem on all uncensored data at each epoch end."""
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    oracle = UncensoredOracle(trace) if oracle is None else oracle
    epochs = dl_epochs(len(trace))
    levels: dict[int, InventoryVector] = {1: x1}
    solutions: list[dict] = []

    def choose(t: int, x: InventoryVector) -> InventoryVector:
        e = next(k for k, (a, b) in enumerate(epochs, start=1) if a <= t <= b)
        if e not in levels:
            seen = tuple(oracle.reveal(s) for s in range(1, epochs[e - 2][1] + 1))
            sol = solve_offline(History(seen, x1), cfg, method)
            levels[e] = sol.base_stock
            solutions.append({"epoch": e, "base_stock": sol.base_stock.values.tolist(), "solver_kind": sol.solver_kind.value})
        return levels[e]

    ep = _simulate("DL", trace, x1, cfg, choose, seed)
    ep.info["epochs"] = solutions
    return ep
