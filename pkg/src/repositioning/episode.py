"""Result record shared by every simulated policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    """Per-period realized modified costs and policies of one simulated run."""

    algorithm: str
    costs: np.ndarray
    policies: np.ndarray  # (T, n) repositioning targets y_t
    states: np.ndarray  # (T + 1, n) pre-decision inventory x_t
    seed: int | None = None
    surrogate_costs: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.costs.size

    @property
    def cumulative_cost(self) -> float:
        return float(self.costs.sum())

    def trajectory_rows(self) -> list[list[float]]:
        """Rows for the policy CSV: period, y_1..y_n, surrogate_cost, realized_cost."""
        sur = self.surrogate_costs if self.surrogate_costs is not None else np.full(self.horizon, np.nan)
        return [[t + 1, *self.policies[t].tolist(), float(sur[t]), float(self.costs[t])] for t in range(self.horizon)]
