"""LP solving with duals, the min-cost-flow repositioning cost, and simplex projection."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from repositioning.domain import InventoryVector, NetworkConfig

FEAS_TOL = 1e-8
DUALITY_TOL = 1e-6


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    FAILED = "SolverFailure"


class LpError(RuntimeError):
    """Raised when an LP that must be solvable is not solved to optimality."""

    def __init__(self, message: str, status: LpStatus | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True, eq=False)
class LpProblem:
    """min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  0 <= x <= upper.

    ``upper`` defaults to +inf everywhere. Matrices may be dense or scipy sparse.
    """

    objective: np.ndarray
    a_eq: object = None
    b_eq: np.ndarray | None = None
    a_ub: object = None
    b_ub: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("objective must be a finite vector")
        nv = c.size
        for a, b, tag in ((self.a_eq, self.b_eq, "eq"), (self.a_ub, self.b_ub, "ub")):
            if (a is None) != (b is None):
                raise ValueError(f"{tag} matrix and rhs must be given together")
            if a is not None:
                if a.shape[1] != nv or a.shape[0] != np.asarray(b).size:
                    raise ValueError(f"{tag} constraint dimensions are inconsistent")
        if self.upper is not None and np.asarray(self.upper).shape != (nv,):
            raise ValueError("upper bounds must match the variable count")
        object.__setattr__(self, "objective", c)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    def with_upper(self, upper: np.ndarray) -> LpProblem:
        return LpProblem(self.objective, self.a_eq, self.b_eq, self.a_ub, self.b_ub, upper)

    def _rows(self, tag: str) -> tuple[object, np.ndarray]:
        a, b = (self.a_eq, self.b_eq) if tag == "eq" else (self.a_ub, self.b_ub)
        if a is None:
            return sparse.csr_matrix((0, self.num_vars)), np.zeros(0)
        return a, np.asarray(b, dtype=float)


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Solver result. Duals of <= rows are <= 0 for a minimization."""

    status: LpStatus
    objective: float
    primal: np.ndarray
    duals_eq: np.ndarray
    duals_ub: np.ndarray
    dual_objective: float

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


_STATUS = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}


def solve_with_duals(p: LpProblem, method: str = "highs-ds") -> LpSolution:
    """Solve with HiGHS (dual simplex by default); deterministic for identical inputs.

    ``highs-ipm`` (interior point with crossover) is faster on large offline LPs.
    """
    a_eq, b_eq = p._rows("eq")
    a_ub, b_ub = p._rows("ub")
    upper = p.upper
    bounds = (0, None) if upper is None else np.column_stack([np.zeros(p.num_vars), upper])
    res = linprog(
        p.objective,
        A_ub=a_ub if b_ub.size else None,
        b_ub=b_ub if b_ub.size else None,
        A_eq=a_eq if b_eq.size else None,
        b_eq=b_eq if b_eq.size else None,
        bounds=bounds,
        method=method,
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9, "presolve": True},
    )
    status = _STATUS.get(res.status, LpStatus.FAILED)
    if status is not LpStatus.OPTIMAL:
        nan = np.full(p.num_vars, np.nan)
        return LpSolution(status, float("nan"), nan, np.full(b_eq.size, np.nan), np.full(b_ub.size, np.nan), float("nan"))
    x = np.asarray(res.x, dtype=float)
    y_eq = np.asarray(res.eqlin.marginals, dtype=float) if b_eq.size else np.zeros(0)
    y_ub = np.asarray(res.ineqlin.marginals, dtype=float) if b_ub.size else np.zeros(0)
    dual_obj = float(b_eq @ y_eq + b_ub @ y_ub)
    if upper is not None:
        finite = np.isfinite(upper)
        dual_obj += float(upper[finite] @ np.asarray(res.upper.marginals)[finite])
    primal_obj = float(p.objective @ x)
    if abs(primal_obj - dual_obj) > DUALITY_TOL * max(1.0, abs(primal_obj)):
        return LpSolution(LpStatus.FAILED, primal_obj, x, y_eq, y_ub, dual_obj)
    return LpSolution(status, primal_obj, x, y_eq, y_ub, dual_obj)


def solve_or_raise(p: LpProblem, what: str = "LP", method: str = "highs-ds") -> LpSolution:
    sol = solve_with_duals(p, method)
    if not sol.optimal:
        raise LpError(f"{what} not solved to optimality: {sol.status.value}", sol.status)
    return sol


# ---------------------------------------------------------------------------
# Min-cost flow on the complete directed graph with arc costs c.


def _offdiag(n: int) -> tuple[np.ndarray, np.ndarray]:
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    return src, dst


def flow_balance_matrix(n: int) -> sparse.csr_matrix:
    """Row j of B maps off-diagonal arc flows to inflow(j) - outflow(j)."""
    src, dst = _offdiag(n)
    arcs = np.arange(src.size)
    rows = np.concatenate([dst, src])
    cols = np.concatenate([arcs, arcs])
    vals = np.concatenate([np.ones(src.size), -np.ones(src.size)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, src.size))


def arc_costs(cfg: NetworkConfig) -> np.ndarray:
    src, dst = _offdiag(cfg.n)
    return cfg.repo_cost[src, dst]


def flows_to_matrix(arc_flows: np.ndarray, n: int) -> np.ndarray:
    src, dst = _offdiag(n)
    out = np.zeros((n, n))
    out[src, dst] = np.maximum(arc_flows, 0.0)
    return out


def _check_balanced(delta: np.ndarray) -> None:
    if abs(delta.sum()) > 1e-9 * max(1.0, np.abs(delta).sum()):
        raise ValueError(f"flow imbalance {delta.sum()!r}: supplies and demands must cancel")


def min_cost_flow(delta, cfg: NetworkConfig) -> tuple[float, np.ndarray]:
    """Cheapest way to move inventory so location j gains ``delta[j]``.

    Returns the optimal cost and the n x n flow matrix (zero diagonal).
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (cfg.n,):
        raise ValueError("delta length must equal n")
    _check_balanced(delta)
    n = cfg.n
    if not np.any(np.abs(delta) > 0):
        return 0.0, np.zeros((n, n))
    p = LpProblem(arc_costs(cfg), flow_balance_matrix(n), delta)
    sol = solve_or_raise(p, "min-cost flow")
    return max(sol.objective, 0.0), flows_to_matrix(sol.primal, n)


def repositioning_cost(delta, cfg: NetworkConfig) -> float:
    """Optimal value M(delta) of the min-cost flow, with a closed form when exact.

    With a single supply node or a single demand node every unit travels along a
    shortest path, so the value is a weighted sum of shortest-path costs.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (cfg.n,):
        raise ValueError("delta length must equal n")
    _check_balanced(delta)
    closed = _single_hub_cost(delta[None, :], cfg)
    if np.isfinite(closed[0]):
        return float(closed[0])
    return min_cost_flow(delta, cfg)[0]


def repositioning_cost_batch(deltas: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Row-wise M(delta); rows without a closed form fall back to the LP."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    out = _single_hub_cost(deltas, cfg)
    for r in np.nonzero(~np.isfinite(out))[0]:
        out[r] = min_cost_flow(deltas[r], cfg)[0]
    return out


def _single_hub_cost(deltas: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    sp = cfg.path_cost
    pos = np.where(deltas > 0, deltas, 0.0)
    neg = np.where(deltas < 0, -deltas, 0.0)
    n_pos = np.count_nonzero(deltas > 0, axis=1)
    n_neg = np.count_nonzero(deltas < 0, axis=1)
    out = np.full(deltas.shape[0], np.inf)
    out[(n_pos == 0) & (n_neg == 0)] = 0.0
    one_sink = n_pos == 1
    if np.any(one_sink):
        sink = np.argmax(pos[one_sink], axis=1)
        out[one_sink] = np.einsum("ri,ri->r", neg[one_sink], sp[:, sink].T)
    one_source = (n_neg == 1) & ~one_sink
    if np.any(one_source):
        source = np.argmax(neg[one_source], axis=1)
        out[one_source] = np.einsum("ri,ri->r", pos[one_source], sp[source, :])
    return out


# ---------------------------------------------------------------------------


def project_simplex(v, total: float = 1.0) -> InventoryVector:
    """Euclidean projection onto {w >= 0, sum w = total} by sort and threshold."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValueError("projection input must be a finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    # remove the last ulp of drift so the sum matches exactly up to rounding
    s = w.sum()
    if s > 0:
        w *= total / s
    return InventoryVector(w, total)
