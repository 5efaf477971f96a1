"""Immutable domain types for the closed-network repositioning model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Tolerance for the "stock ran out" indicator and for simplex membership.
BIND_TOL = 1e-9
MASS_TOL = 1e-9


def _frozen_array(values, *, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    """Location count with lost-sales costs ``l[i, j]`` and moving costs ``c[i, j]``."""

    lost_sales: np.ndarray
    repo_cost: np.ndarray

    def __post_init__(self) -> None:
        l = _frozen_array(self.lost_sales, ndim=2, name="lost_sales")
        c = _frozen_array(self.repo_cost, ndim=2, name="repo_cost")
        n = l.shape[0]
        if n < 2:
            raise ValueError("a network needs at least two locations")
        if l.shape != (n, n) or c.shape != (n, n):
            raise ValueError("cost matrices must both be n x n")
        if np.any(l < 0) or np.any(c < 0):
            raise ValueError("cost entries must be nonnegative")
        if np.any(np.diag(c) != 0):
            raise ValueError("diagonal repositioning costs must be zero")
        object.__setattr__(self, "lost_sales", l)
        object.__setattr__(self, "repo_cost", c)

    @property
    def n(self) -> int:
        return self.lost_sales.shape[0]

    @cached_property
    def path_cost(self) -> np.ndarray:
        """All-pairs shortest path costs over the complete graph with weights c."""
        d = self.repo_cost.copy()
        for k in range(self.n):
            d = np.minimum(d, d[:, [k]] + d[[k], :])
        d.setflags(write=False)
        return d

    def fulfillment_weights(self, od_matrix: np.ndarray) -> np.ndarray:
        """a_i = sum_j l_ij P_ij, the value of serving one unit of demand at i."""
        return np.einsum("ij,ij->i", self.lost_sales, od_matrix)

    def to_dict(self) -> dict:
        return {"n": self.n, "lost_sales": self.lost_sales.tolist(), "repo_cost": self.repo_cost.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> NetworkConfig:
        return cls(np.asarray(data["lost_sales"], float), np.asarray(data["repo_cost"], float))


@dataclass(frozen=True, eq=False)
class InventoryVector:
    """A point of the scaled simplex: nonnegative entries summing to ``total``."""

    values: np.ndarray
    total: float = 1.0

    def __post_init__(self) -> None:
        v = _frozen_array(self.values, ndim=1, name="values")
        if self.total <= 0:
            raise ValueError("total must be positive")
        if np.any(v < -MASS_TOL):
            raise ValueError("inventory entries must be nonnegative")
        if abs(v.sum() - self.total) > MASS_TOL * max(1.0, self.total):
            raise ValueError(f"inventory sums to {v.sum()!r}, expected {self.total!r}")
        if np.any(v < 0):
            v = np.maximum(v, 0.0)
            v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "total", float(self.total))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def uniform(cls, n: int, total: float = 1.0) -> InventoryVector:
        return cls(np.full(n, total / n), total)

    @classmethod
    def renormalized(cls, values, total: float = 1.0) -> InventoryVector:
        """Build from values that sum to ``total`` up to accumulated rounding."""
        v = np.maximum(np.asarray(values, dtype=float), 0.0)
        s = v.sum()
        if abs(s - total) > 1e-7 * max(1.0, total):
            raise ValueError(f"inventory mass drifted to {s!r}, expected {total!r}")
        return cls(v * (total / s) if s > 0 else np.full(v.shape, total / v.size), total)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __repr__(self) -> str:
        return f"InventoryVector({self.values.tolist()}, total={self.total})"


def _check_od(P: np.ndarray, n: int, *, stochastic: bool) -> None:
    if P.shape != (n, n):
        raise ValueError(f"od_matrix must be {n} x {n}, got {P.shape}")
    if np.any(P < -1e-12) or np.any(P > 1 + 1e-12):
        raise ValueError("od_matrix entries must lie in [0, 1]")
    rows = P.sum(axis=1)
    if stochastic and np.any(np.abs(rows - 1.0) > 1e-9):
        raise ValueError("od_matrix rows must sum to 1")
    if not stochastic and np.any(rows > 1.0 + 1e-9):
        raise ValueError("od_matrix rows must sum to at most 1")


@dataclass(frozen=True, eq=False)
class DemandSample:
    """One period of the base model: demand d and a row-stochastic OD matrix P."""

    demand: np.ndarray
    od_matrix: np.ndarray

    def __post_init__(self) -> None:
        d = _frozen_array(self.demand, ndim=1, name="demand")
        P = _frozen_array(self.od_matrix, ndim=2, name="od_matrix")
        if np.any(d < 0):
            raise ValueError("demand must be nonnegative")
        _check_od(P, d.shape[0], stochastic=True)
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "od_matrix", P)

    @property
    def n(self) -> int:
        return self.demand.shape[0]


@dataclass(frozen=True, eq=False)
class SubperiodSample:
    """One subperiod of the extended model; OD rows may sum to less than 1."""

    demand: np.ndarray
    od_matrix: np.ndarray

    def __post_init__(self) -> None:
        d = _frozen_array(self.demand, ndim=1, name="demand")
        P = _frozen_array(self.od_matrix, ndim=2, name="od_matrix")
        if np.any(d < 0):
            raise ValueError("demand must be nonnegative")
        _check_od(P, d.shape[0], stochastic=False)
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "od_matrix", P)

    @property
    def n(self) -> int:
        return self.demand.shape[0]

    @property
    def retention(self) -> np.ndarray:
        """(I - P) 1: the fraction of rented units still out after the subperiod."""
        return np.maximum(1.0 - self.od_matrix.sum(axis=1), 0.0)


@dataclass(frozen=True, eq=False)
class ExtendedState:
    """On-hand stock and outstanding rentals indexed by origin."""

    on_hand: np.ndarray
    outstanding: np.ndarray
    total: float = 1.0

    def __post_init__(self) -> None:
        x = _frozen_array(self.on_hand, ndim=1, name="on_hand")
        g = _frozen_array(self.outstanding, ndim=1, name="outstanding")
        if x.shape != g.shape:
            raise ValueError("on_hand and outstanding must have equal length")
        if np.any(x < -MASS_TOL) or np.any(g < -MASS_TOL):
            raise ValueError("state entries must be nonnegative")
        if abs(x.sum() + g.sum() - self.total) > MASS_TOL * max(1.0, self.total):
            raise ValueError("on_hand plus outstanding must equal the total")
        object.__setattr__(self, "on_hand", x)
        object.__setattr__(self, "outstanding", g)
        object.__setattr__(self, "total", float(self.total))

    @classmethod
    def start(cls, y: InventoryVector) -> ExtendedState:
        return cls(y.values, np.zeros(y.n), y.total)


@dataclass(frozen=True, eq=False)
class CensoredObservation:
    """What the operator sees: fulfilled demand, the realized P, and stock-out flags."""

    fulfilled: np.ndarray
    od_matrix: np.ndarray
    binding: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        f = _frozen_array(self.fulfilled, ndim=1, name="fulfilled")
        P = _frozen_array(self.od_matrix, ndim=2, name="od_matrix")
        b = np.array(self.binding, dtype=bool, copy=True)
        if b.shape != f.shape:
            raise ValueError("binding must match fulfilled in length")
        if np.any(f < 0):
            raise ValueError("fulfilled demand must be nonnegative")
        _check_od(P, f.shape[0], stochastic=False)
        b.setflags(write=False)
        object.__setattr__(self, "fulfilled", f)
        object.__setattr__(self, "od_matrix", P)
        object.__setattr__(self, "binding", b)
