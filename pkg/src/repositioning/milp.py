"""Deterministic best-first branch and bound for LPs with one-hot binary groups.

Each group is a set of binaries constrained (in the LP) to sum to one. Branching
splits a group's still-allowed members into two halves and forbids one half in
each child, so every node is described by the vector of variable upper bounds.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from repositioning.lp import LpProblem, LpSolution, LpStatus, solve_with_duals

INT_TOL = 1e-9

Heuristic = Callable[[np.ndarray, np.ndarray], "LpSolution | None"]
NodeProblem = Callable[[np.ndarray], LpProblem]


class MilpError(RuntimeError):
    """Raised when branch and bound stops before proving optimality."""

    def __init__(self, message: str, incumbent: np.ndarray | None, objective: float, gap: float):
        super().__init__(message)
        self.incumbent = incumbent
        self.objective = objective
        self.gap = gap


@dataclass(frozen=True, eq=False)
class MilpResult:
    primal: np.ndarray
    objective: float
    bound: float
    nodes: int

    @property
    def gap(self) -> float:
        return max(self.objective - self.bound, 0.0)


def _integral(x: np.ndarray, groups: Sequence[np.ndarray]) -> bool:
    return all(np.max(x[g]) >= 1.0 - INT_TOL for g in groups)


def _branch(x: np.ndarray, upper: np.ndarray, groups: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    # most fractional group first; ties go to the lowest group index
    frac = [1.0 - np.max(x[g]) for g in groups]
    g = groups[int(np.argmax(frac))]
    allowed = g[upper[g] > 0]
    vals = np.clip(x[allowed], 0.0, None)
    nz = np.nonzero(vals > 0)[0]
    lo, hi = nz[0] + 1, nz[-1]
    cum = np.cumsum(vals) / vals.sum()
    k = int(np.clip(np.searchsorted(cum, 0.5) + 1, lo, hi))
    left, right = upper.copy(), upper.copy()
    left[allowed[k:]] = 0.0
    right[allowed[:k]] = 0.0
    return left, right


def branch_and_bound(
    problem: LpProblem,
    groups: Sequence[np.ndarray],
    *,
    heuristic: Heuristic | None = None,
    node_problem: NodeProblem | None = None,
    node_limit: int = 1_000_000,
    gap_tol: float = 1e-7,
) -> MilpResult:
    """Minimize ``problem`` with every group one-hot; exact up to ``gap_tol``.

    ``node_problem`` may add cuts that are valid under a node's bounds.
    """
    base_upper = np.full(problem.num_vars, np.inf) if problem.upper is None else np.asarray(problem.upper, float)
    groups = [np.asarray(g, dtype=int) for g in groups]
    for g in groups:
        base_upper[g] = np.minimum(base_upper[g], 1.0)

    best_x: np.ndarray | None = None
    best_obj = np.inf
    counter = itertools.count()
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []

    def consider(sol: LpSolution | None) -> None:
        nonlocal best_x, best_obj
        if sol is not None and sol.optimal and _integral(sol.primal, groups) and sol.objective < best_obj:
            best_obj, best_x = sol.objective, sol.primal

    def evaluate(upper: np.ndarray) -> None:
        node = problem.with_upper(upper) if node_problem is None else node_problem(upper)
        sol = solve_with_duals(node)
        if sol.status is LpStatus.INFEASIBLE:
            return
        if not sol.optimal:
            raise MilpError(f"relaxation failed: {sol.status.value}", best_x, best_obj, np.inf)
        if sol.objective >= best_obj - gap_tol:
            return
        if _integral(sol.primal, groups):
            consider(sol)
            return
        if heuristic is not None:
            consider(heuristic(sol.primal, upper))
            if sol.objective >= best_obj - gap_tol:
                return
        heapq.heappush(heap, (sol.objective, next(counter), upper, sol.primal))

    nodes = 1
    evaluate(base_upper)
    while heap and heap[0][0] < best_obj - gap_tol:
        if nodes >= node_limit:
            raise MilpError("node limit reached", best_x, best_obj, best_obj - heap[0][0])
        _, _, upper, x = heapq.heappop(heap)
        for child in _branch(x, upper, groups):
            nodes += 1
            evaluate(child)
    if best_x is None:
        raise MilpError("problem is infeasible", None, np.inf, np.inf)
    bound = min(best_obj, heap[0][0]) if heap else best_obj
    return MilpResult(best_x, float(best_obj), float(bound), nodes)
