"""Inventory and cost dynamics for the base and multi-subperiod models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from repositioning.domain import (
    BIND_TOL,
    CensoredObservation,
    DemandSample,
    ExtendedState,
    InventoryVector,
    NetworkConfig,
    SubperiodSample,
)
from repositioning.lp import repositioning_cost

FlowOracle = Callable[[np.ndarray, NetworkConfig], float]


def _vec(y) -> np.ndarray:
    return y.values if isinstance(y, InventoryVector) else np.asarray(y, dtype=float)


def _check_dims(y: np.ndarray, d) -> None:
    if y.shape != d.demand.shape:
        raise ValueError(f"dimension mismatch: stock has {y.size} entries, demand {d.demand.size}")


def censor(y: InventoryVector, d: DemandSample | SubperiodSample) -> CensoredObservation:
    """Fulfilled demand min(y, d) with the stock-out flags."""
    yv = _vec(y)
    _check_dims(yv, d)
    fulfilled = np.minimum(yv, d.demand)
    binding = np.abs(fulfilled - yv) <= BIND_TOL
    return CensoredObservation(fulfilled, d.od_matrix, binding)


def state_update(y: InventoryVector, d: DemandSample) -> InventoryVector:
    """Next-period stock (y - d)^+ + P' min(y, d)."""
    if not isinstance(d, DemandSample):
        raise TypeError("state_update needs a DemandSample with a row-stochastic P")
    yv = _vec(y)
    _check_dims(yv, d)
    served = np.minimum(yv, d.demand)
    nxt = np.maximum(yv - d.demand, 0.0) + d.od_matrix.T @ served
    total = y.total if isinstance(y, InventoryVector) else float(yv.sum())
    return InventoryVector(nxt, total)


def lost_sales_cost(y: InventoryVector, d: DemandSample, cfg: NetworkConfig) -> float:
    yv = _vec(y)
    _check_dims(yv, d)
    lost = np.maximum(d.demand - yv, 0.0)
    return float(cfg.fulfillment_weights(d.od_matrix) @ lost)


def modified_cost(
    x: InventoryVector,
    y: InventoryVector,
    d: DemandSample,
    cfg: NetworkConfig,
    flow: FlowOracle = repositioning_cost,
) -> float:
    """M(y - x) minus the lost-sales value of the demand that y serves."""
    xv, yv = _vec(x), _vec(y)
    _check_dims(yv, d)
    if xv.shape != yv.shape:
        raise ValueError("x and y must have equal length")
    if abs(xv.sum() - yv.sum()) > 1e-9 * max(1.0, abs(xv.sum())):
        raise ValueError("x and y must carry the same total inventory")
    served = np.minimum(yv, d.demand)
    return flow(yv - xv, cfg) - float(cfg.fulfillment_weights(d.od_matrix) @ served)


def total_cost(x: InventoryVector, y: InventoryVector, d: DemandSample, cfg: NetworkConfig) -> float:
    """Repositioning plus lost-sales cost of one period."""
    return repositioning_cost(_vec(y) - _vec(x), cfg) + lost_sales_cost(y, d, cfg)


def state_update_extended(s: ExtendedState, sub: SubperiodSample) -> ExtendedState:
    """One subperiod: serve demand, return a share of rentals, keep the rest out."""
    x, g = s.on_hand, s.outstanding
    if x.shape != sub.demand.shape:
        raise ValueError("dimension mismatch between state and subperiod")
    P = sub.od_matrix
    if np.any(P.sum(axis=1) > 1 + 1e-9):
        raise ValueError("od_matrix rows must sum to at most 1")
    rented = np.minimum(x, sub.demand) + g
    on_hand = np.maximum(x - sub.demand, 0.0) + P.T @ rented
    outstanding = rented * sub.retention
    return ExtendedState(on_hand, outstanding, s.total)


@dataclass(frozen=True)
class ExtendedPeriodOutcome:
    """Result of simulating one review period of the extended model."""

    cost: float
    next_state: InventoryVector
    on_hand: tuple[np.ndarray, ...]
    residual: np.ndarray


def simulate_extended_period(
    x_prev: InventoryVector,
    y: InventoryVector,
    subs: Sequence[SubperiodSample],
    cfg: NetworkConfig,
    flow: FlowOracle = repositioning_cost,
) -> ExtendedPeriodOutcome:
    if len(subs) == 0:
        raise ValueError("a review period needs at least one subperiod")
    xv, yv = _vec(x_prev), _vec(y)
    if abs(xv.sum() - yv.sum()) > 1e-9 * max(1.0, abs(xv.sum())):
        raise ValueError("x_prev and y must carry the same total inventory")
    state = ExtendedState.start(y)
    served_value = 0.0
    on_hand = []
    for sub in subs:
        on_hand.append(state.on_hand)
        served = np.minimum(state.on_hand, sub.demand)
        served_value += float(cfg.fulfillment_weights(sub.od_matrix) @ served)
        state = state_update_extended(state, sub)
    nxt = InventoryVector(state.on_hand + state.outstanding, y.total)
    cost = flow(yv - xv, cfg) - served_value
    return ExtendedPeriodOutcome(cost, nxt, tuple(on_hand), state.outstanding)


def extended_modified_cost(
    x_prev: InventoryVector,
    y: InventoryVector,
    subs: Sequence[SubperiodSample],
    cfg: NetworkConfig,
    flow: FlowOracle = repositioning_cost,
) -> tuple[float, InventoryVector]:
    """Period cost and end-of-period stock, residual rentals returned to their origin."""
    out = simulate_extended_period(x_prev, y, subs, cfg, flow)
    return out.cost, out.next_state


def censor_extended(y: InventoryVector, subs: Sequence[SubperiodSample]) -> list[CensoredObservation]:
    """Per-subperiod censored observations when the period starts at y."""
    state = ExtendedState.start(y)
    obs = []
    for sub in subs:
        obs.append(censor(state.on_hand, sub))
        state = state_update_extended(state, sub)
    return obs
