"""SOAR: online projected subgradient descent on LP surrogate costs from censored data."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from repositioning.domain import CensoredObservation, DemandSample, InventoryVector, NetworkConfig, SubperiodSample
from repositioning.episode import EpisodeResult
from repositioning.lp import project_simplex
from repositioning.model import censor, censor_extended, modified_cost, simulate_extended_period, state_update
from repositioning.offline import CostConditionWarning, check_cost_condition
from repositioning.surrogate import extended_operators, solve_surrogate


@dataclass(frozen=True, eq=False)
class SoarState:
    period: int
    policy: InventoryVector
    step_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError("period starts at 1")
        if self.step_scale <= 0:
            raise ValueError("step scale must be positive")


@dataclass(frozen=True, eq=False)
class SubgradientReport:
    gradient: np.ndarray
    duals: np.ndarray
    surrogate_cost: float


def soar_step(state: SoarState, obs: CensoredObservation, cfg: NetworkConfig) -> tuple[SoarState, SubgradientReport]:
    """Solve the surrogate LP on censored data and take a projected subgradient step."""
    if obs.fulfilled.size != state.policy.n:
        raise ValueError("observation dimension does not match the policy")
    sol = solve_surrogate([obs.od_matrix], obs.fulfilled[None, :], cfg)
    duals = sol.cap_duals[0]
    g = np.where(obs.binding, duals, 0.0)
    step = state.step_scale / math.sqrt(state.period)
    nxt = project_simplex(state.policy.values - step * g, state.policy.total)
    return SoarState(state.period + 1, nxt, state.step_scale), SubgradientReport(g, duals, sol.objective)


def _warn_condition(cfg: NetworkConfig, mats: Sequence[np.ndarray]) -> None:
    if not check_cost_condition(cfg, mats):
        warnings.warn("cost condition fails on this trace; SOAR runs without its guarantee", CostConditionWarning, stacklevel=3)


def run_soar(
    trace: Sequence[DemandSample],
    y1: InventoryVector,
    cfg: NetworkConfig,
    *,
    x1: InventoryVector | None = None,
    step_scale: float = 1.0,
    seed: int | None = None,
) -> EpisodeResult:
    """Simulate SOAR along the trace starting from stock x1 (default y1)."""
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    _warn_condition(cfg, [d.od_matrix for d in trace])
    x = y1 if x1 is None else x1
    state = SoarState(1, y1, step_scale)
    T, n = len(trace), y1.n
    costs, sur = np.empty(T), np.empty(T)
    policies, states = np.empty((T, n)), np.empty((T + 1, n))
    states[0] = x.values
    for t, d in enumerate(trace):
        y = state.policy
        policies[t] = y.values
        costs[t] = modified_cost(x, y, d, cfg)
        obs = censor(y, d)
        state, report = soar_step(state, obs, cfg)
        sur[t] = report.surrogate_cost
        x = state_update(y, d)
        states[t + 1] = x.values
    return EpisodeResult("SOAR", costs, policies, states, seed, sur)


# ---------------------------------------------------------------------------
# multi-subperiod extension


def recover_subgradients(
    g: Sequence[np.ndarray],
    od_matrices: Sequence[np.ndarray],
    binding: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Solve the triangular system linking per-subperiod duals to stock multipliers.

    Runs backward from the last subperiod:
    mu_k = g_k - (I - P_k) sum_{l>k} mu_l + sum_{l>=k+2} sum_{s=k+1}^{l-1} (P_s mu_l) o prod_{u=k}^{s-1} r_u
    with r_u = (I - P_u) 1. With ``binding`` given, mu_k is zeroed where stock
    did not run out, as complementary slackness requires.
    """
    H = len(g)
    if H == 0 or len(od_matrices) != H:
        raise ValueError("need one OD matrix per subperiod gradient")
    ops = extended_operators(od_matrices)
    mu: list[np.ndarray] = [np.zeros_like(np.asarray(g[0], float))] * H
    for k in reversed(range(H)):
        v = np.asarray(g[k], dtype=float).copy()
        for l in range(k + 1, H):
            v = v + ops.onhand[l][k].T @ mu[l]
        if binding is not None:
            v = np.where(binding[k], v, 0.0)
        mu[k] = v
    return mu


def soar_extended_step(
    state: SoarState,
    subobs: Sequence[CensoredObservation],
    cfg: NetworkConfig,
    *,
    mask: bool = True,
) -> tuple[SoarState, SubgradientReport]:
    H = len(subobs)
    if H == 0:
        raise ValueError("need at least one subperiod observation")
    Ps = [o.od_matrix for o in subobs]
    sol = solve_surrogate(Ps, np.array([o.fulfilled for o in subobs]), cfg)
    binding = [o.binding for o in subobs]
    g = [np.where(binding[k], sol.cap_duals[k], 0.0) for k in range(H)]
    mu = recover_subgradients(g, Ps, binding if mask else None)
    direction = np.sum(mu, axis=0)
    step = state.step_scale / (H * math.sqrt(state.period))
    nxt = project_simplex(state.policy.values - step * direction, state.policy.total)
    return SoarState(state.period + 1, nxt, state.step_scale), SubgradientReport(direction, sol.cap_duals, sol.objective)


def run_soar_extended(
    trace: Sequence[Sequence[SubperiodSample]],
    y1: InventoryVector,
    cfg: NetworkConfig,
    *,
    x1: InventoryVector | None = None,
    step_scale: float = 1.0,
    mask: bool = True,
    seed: int | None = None,
) -> EpisodeResult:
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    _warn_condition(cfg, [s.od_matrix for period in trace for s in period])
    x = y1 if x1 is None else x1
    state = SoarState(1, y1, step_scale)
    T, n = len(trace), y1.n
    costs, sur = np.empty(T), np.empty(T)
    policies, states = np.empty((T, n)), np.empty((T + 1, n))
    states[0] = x.values
    for t, period in enumerate(trace):
        y = state.policy
        policies[t] = y.values
        out = simulate_extended_period(x, y, period, cfg)
        costs[t] = out.cost
        state, report = soar_extended_step(state, censor_extended(y, period), cfg, mask=mask)
        sur[t] = report.surrogate_cost
        x = out.next_state
        states[t + 1] = x.values
    return EpisodeResult("SOAR-Extended", costs, policies, states, seed, sur)
