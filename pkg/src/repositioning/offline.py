"""Best base-stock vector from historical data: LP, MILP, grid search and SAA."""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from repositioning.domain import DemandSample, InventoryVector, NetworkConfig, SubperiodSample
from repositioning.lp import (
    LpError,
    LpProblem,
    arc_costs,
    flow_balance_matrix,
    repositioning_cost,
    repositioning_cost_batch,
    solve_or_raise,
    solve_with_duals,
)
from repositioning.milp import branch_and_bound
from repositioning.model import modified_cost, simulate_extended_period, state_update
from repositioning.surrogate import extended_operators

COND_SLACK = 1e-12
# above this many samples the exact MILP is replaced by grid search when n <= 3
MILP_MAX_SAMPLES = 80


class CostConditionWarning(UserWarning):
    pass


class SolverKind(enum.Enum):
    MILP = "MILP"
    LP = "LP"
    GRID = "SAA-grid"


@dataclass(frozen=True, eq=False)
class History:
    """Observed periods; each entry is a DemandSample or a list of SubperiodSample."""

    samples: tuple
    initial_state: InventoryVector | None = None

    def __post_init__(self) -> None:
        samples = tuple(tuple(s) if isinstance(s, (list, tuple)) else s for s in self.samples)
        if not samples:
            raise ValueError("history must contain at least one period")
        first = samples[0]
        extended = isinstance(first, tuple)
        n = (first[0] if extended else first).n
        for s in samples:
            subs = s if extended else (s,)
            if extended != isinstance(s, tuple) or any(x.n != n for x in subs):
                raise ValueError("history periods must share shape and dimension")
            if extended and len(s) != len(first):
                raise ValueError("every period must have the same number of subperiods")
        if self.initial_state is not None and self.initial_state.n != n:
            raise ValueError("initial state dimension mismatch")
        object.__setattr__(self, "samples", samples)

    @property
    def extended(self) -> bool:
        return isinstance(self.samples[0], tuple)

    @property
    def n(self) -> int:
        first = self.samples[0]
        return (first[0] if self.extended else first).n

    @property
    def total(self) -> float:
        return 1.0 if self.initial_state is None else self.initial_state.total

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Demand (t, n) and OD (t, n, n) arrays of a base-model history."""
        if self.extended:
            raise ValueError("arrays() applies to base-model histories")
        return (
            np.array([s.demand for s in self.samples]),
            np.array([s.od_matrix for s in self.samples]),
        )


@dataclass(frozen=True, eq=False)
class OfflineSolution:
    base_stock: InventoryVector
    objective: float
    solver_kind: SolverKind
    optimality_gap: float = 0.0

    def __post_init__(self) -> None:
        if self.optimality_gap < 0:
            raise ValueError("gap must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "n": self.base_stock.n,
            "base_stock": self.base_stock.values.tolist(),
            "objective": self.objective,
            "solver_kind": self.solver_kind.value,
            "gap": self.optimality_gap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> OfflineSolution:
        S = np.asarray(data["base_stock"], dtype=float)
        if S.size != data["n"]:
            raise ValueError("base_stock length does not match n")
        return cls(InventoryVector(S, float(S.sum())), float(data["objective"]), SolverKind(data["solver_kind"]), float(data["gap"]))


def check_cost_condition(cfg: NetworkConfig, od_matrices: Sequence[np.ndarray]) -> bool:
    """Row-wise: expected lost-sales cost of a rental dominates its return trip cost."""
    l, c = cfg.lost_sales, cfg.repo_cost
    for P in od_matrices:
        P = np.asarray(P, dtype=float)
        lhs = np.einsum("ji,ji->j", l, P)
        rhs = np.einsum("ji,ij->j", P, c)
        if np.any(lhs < rhs - COND_SLACK):
            return False
    return True


def _od_list(h: History) -> list[np.ndarray]:
    if h.extended:
        return [sub.od_matrix for period in h.samples for sub in period]
    return [s.od_matrix for s in h.samples]


# ---------------------------------------------------------------------------
# objective evaluation


def offline_objective(S, h: History, cfg: NetworkConfig) -> float:
    """Sum over samples of M((I - P')m) - a'm with m = min(S, d)."""
    S = np.asarray(S, dtype=float)
    if h.extended:
        return float(sum(_extended_sample_cost(S, period, cfg) for period in h.samples))
    D, P = h.arrays()
    return float(offline_objective_batch(S[None, :], D, P, cfg)[0])


def offline_objective_batch(S: np.ndarray, D: np.ndarray, P: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Objective for each row of S (g, n) on samples D (t, n), P (t, n, n)."""
    m = np.minimum(S[:, None, :], D[None, :, :])
    back = np.einsum("gsi,sij->gsj", m, P)
    a = np.einsum("ij,sij->si", cfg.lost_sales, P)
    flow = repositioning_cost_batch((m - back).reshape(-1, cfg.n), cfg).reshape(m.shape[:2])
    return flow.sum(axis=1) - np.einsum("gsi,si->g", m, a)


def _extended_sample_cost(S: np.ndarray, period: Sequence[SubperiodSample], cfg: NetworkConfig) -> float:
    y = InventoryVector(S, float(S.sum()))
    out = simulate_extended_period(y, y, period, cfg)
    return out.cost + repositioning_cost(S - out.next_state.values, cfg)


# ---------------------------------------------------------------------------
# LP reformulation


def _offline_lp(D: np.ndarray, P: np.ndarray, cfg: NetworkConfig, total: float) -> tuple[LpProblem, int]:
    """Variables [S, (w_s, xi_s) for each s]; returns the problem and block width."""
    t, n = D.shape
    c = arc_costs(cfg)
    width = n + c.size
    B = flow_balance_matrix(n)
    eye = sparse.identity(n, format="csr")
    eq_blocks = [sparse.hstack([-(eye - sparse.csr_matrix(P[s].T)), B]) for s in range(t)]
    a_eq = sparse.vstack(
        [
            sparse.hstack([sparse.csr_matrix((t * n, n)), sparse.block_diag(eq_blocks)]),
            sparse.hstack([sparse.csr_matrix(np.ones((1, n))), sparse.csr_matrix((1, t * width))]),
        ],
        format="csr",
    )
    b_eq = np.concatenate([np.zeros(t * n), [total]])
    pick_w = sparse.hstack([eye, sparse.csr_matrix((n, c.size))])
    a_ub = sparse.hstack(
        [sparse.vstack([-eye] * t), sparse.block_diag([pick_w] * t)],
        format="csr",
    )
    b_ub = np.zeros(t * n)
    a = np.einsum("ij,sij->si", cfg.lost_sales, P)
    objective = np.concatenate([np.zeros(n), np.concatenate([np.concatenate([-a[s], c]) for s in range(t)])])
    upper = np.concatenate([np.full(n, total), np.concatenate([np.concatenate([D[s], np.full(c.size, np.inf)]) for s in range(t)])])
    return LpProblem(objective, a_eq, b_eq, a_ub, b_ub, upper), width


def _method_for(problem: LpProblem) -> str:
    return "highs-ipm" if problem.num_vars > 20_000 else "highs-ds"


def _as_inventory(S: np.ndarray, total: float) -> InventoryVector:
    S = np.maximum(S, 0.0)
    return InventoryVector(S * (total / S.sum()), total)


def solve_offline_lp(h: History, cfg: NetworkConfig) -> OfflineSolution:
    """LP reformulation; exact when the cost condition holds."""
    if h.extended:
        return _solve_offline_lp_extended(h, cfg)
    holds = check_cost_condition(cfg, _od_list(h))
    if not holds:
        warnings.warn("cost condition fails; the LP reformulation may be inexact", CostConditionWarning, stacklevel=2)
    D, P = h.arrays()
    problem, width = _offline_lp(D, P, cfg, h.total)
    sol = solve_or_raise(problem, "offline LP", _method_for(problem))
    n = cfg.n
    S = _as_inventory(sol.primal[:n], h.total)
    if holds:
        w = sol.primal[n:].reshape(len(D), width)[:, :n]
        if np.max(np.abs(w - np.minimum(D, S.values))) > 1e-6:
            # alternative optimum; the objective must still be attained at S
            true = offline_objective(S.values, h, cfg)
            if abs(true - sol.objective) > 1e-6 * max(1.0, abs(true)):
                raise LpError("offline LP optimum does not match its base-stock evaluation")
    return OfflineSolution(S, sol.objective, SolverKind.LP, 0.0)


# ---------------------------------------------------------------------------
# MILP reformulation


@dataclass(frozen=True)
class _MilpLayout:
    n: int
    t: int
    arcs: int

    def S(self, i: int) -> int:
        return i

    def m(self, s: int, i: int) -> int:
        return self.n + s * self.n + i

    def xi(self, s: int) -> int:
        return self.n + self.t * self.n + s * self.arcs

    def z(self, q: int, i: int) -> int:
        return self.n + self.t * self.n + self.t * self.arcs + q * self.n + i

    @property
    def size(self) -> int:
        return self.n + self.t * self.n + self.t * self.arcs + (self.t + 1) * self.n


class _Rows:
    def __init__(self) -> None:
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []
        self.rhs: list[float] = []

    def add(self, entries: Sequence[tuple[int, float]], rhs: float) -> None:
        row = len(self.rhs)
        for col, val in entries:
            self.r.append(row)
            self.c.append(col)
            self.v.append(val)
        self.rhs.append(rhs)

    def matrix(self, ncols: int) -> tuple[sparse.csr_matrix, np.ndarray]:
        a = sparse.csr_matrix((self.v, (self.r, self.c)), shape=(len(self.rhs), ncols))
        return a, np.asarray(self.rhs)


def _offline_milp(D: np.ndarray, P: np.ndarray, cfg: NetworkConfig, total: float, tighten: bool = True):
    t, n = D.shape
    c = arc_costs(cfg)
    L = _MilpLayout(n, t, c.size)
    big_m = 2.0 * max(1.0, total, float(D.max(initial=0.0)))
    B = flow_balance_matrix(n).tocoo()
    a = np.einsum("ij,sij->si", cfg.lost_sales, P)

    objective = np.zeros(L.size)
    upper = np.full(L.size, np.inf)
    for i in range(n):
        upper[L.S(i)] = total
    eq, ub = _Rows(), _Rows()
    for s in range(t):
        objective[L.xi(s):L.xi(s) + c.size] = c
        for i in range(n):
            objective[L.m(s, i)] = -a[s, i]
            upper[L.m(s, i)] = D[s, i]
            ub.add([(L.m(s, i), 1.0), (L.S(i), -1.0)], 0.0)
        # B xi_s - (I - P_s') m_s = 0
        for j in range(n):
            entries = [(L.xi(s) + int(col), float(val)) for row, col, val in zip(B.row, B.col, B.data) if row == j]
            entries += [(L.m(s, i), P[s, i, j]) for i in range(n)]
            entries.append((L.m(s, j), -1.0))
            eq.add(entries, 0.0)
    eq.add([(L.S(i), 1.0) for i in range(n)], total)

    groups = []
    orders = []
    mvars = []
    for i in range(n):
        order = np.argsort(D[:, i], kind="stable")
        dt = D[order, i]
        orders.append(dt)
        mvars.append(np.array([L.m(int(order[r]), i) for r in range(t)]))
        groups.append(np.array([L.z(q, i) for q in range(t + 1)]))
        eq.add([(L.z(q, i), 1.0) for q in range(t + 1)], 1.0)
        # segment: sum_r z_{r+1} dt_r <= S_i <= sum_r z_r dt_r + K z_{t}
        ub.add([(L.z(r + 1, i), dt[r]) for r in range(t)] + [(L.S(i), -1.0)], 0.0)
        ub.add([(L.S(i), 1.0)] + [(L.z(r, i), -dt[r]) for r in range(t)] + [(L.z(t, i), -total)], 0.0)
        for r in range(t):
            mr = L.m(int(order[r]), i)
            if tighten:
                # aggregated forms: m >= d * sum_{q>r} z_q and m >= S - K * (1 - sum_{q<=r} z_q)
                ub.add([(mr, -1.0)] + [(L.z(q, i), dt[r]) for q in range(r + 1, t + 1)], 0.0)
                ub.add([(mr, -1.0), (L.S(i), 1.0)] + [(L.z(q, i), total) for q in range(r + 1)], total)
            for q in range(t + 1):
                zq = L.z(q, i)
                if q <= r:
                    ub.add([(mr, 1.0), (L.S(i), -1.0), (zq, big_m)], big_m)
                    ub.add([(mr, -1.0), (L.S(i), 1.0), (zq, big_m)], big_m)
                else:
                    ub.add([(mr, 1.0), (zq, big_m)], big_m + dt[r])
                    ub.add([(mr, -1.0), (zq, big_m)], big_m - dt[r])
    a_eq, b_eq = eq.matrix(L.size)
    a_ub, b_ub = ub.matrix(L.size)
    return LpProblem(objective, a_eq, b_eq, a_ub, b_ub, upper), groups, orders, mvars, L


def solve_offline_milp(
    h: History, cfg: NetworkConfig, *, node_limit: int = 1_000_000, tighten: bool = True
) -> OfflineSolution:
    """Exact offline optimum for any cost structure via the big-M encoding of min(S, d)."""
    if h.extended:
        raise ValueError("the MILP covers the base model only")
    D, P = h.arrays()
    problem, groups, orders, mvars, L = _offline_milp(D, P, cfg, h.total, tighten)
    n = cfg.n
    base_upper = problem.upper.copy()
    tried: dict[tuple[int, ...], object] = {}

    def heuristic(x: np.ndarray, _upper: np.ndarray):
        S = x[:n]
        seg = tuple(int(np.searchsorted(orders[i], S[i] - 1e-12, side="left")) for i in range(n))
        if seg in tried:
            return tried[seg]
        fixed = base_upper.copy()
        for i, g in enumerate(groups):
            fixed[g] = 0.0
            fixed[g[seg[i]]] = 1.0
        sol = solve_with_duals(problem.with_upper(fixed))
        tried[seg] = sol
        return sol

    def node_problem(upper: np.ndarray) -> LpProblem:
        return _with_secants(problem, upper, groups, orders, mvars, L, h.total)

    res = branch_and_bound(
        problem,
        groups,
        heuristic=heuristic,
        node_problem=node_problem if tighten else None,
        node_limit=node_limit,
    )
    S = _as_inventory(res.primal[:n], h.total)
    return OfflineSolution(S, res.objective, SolverKind.MILP, res.gap)


def _with_secants(
    problem: LpProblem, upper: np.ndarray, groups, orders, mvars, L: _MilpLayout, total: float
) -> LpProblem:
    """Add m >= secant of min(S, d) over the S range allowed by the node's segments.

    min(S, d) is concave in S, so its chord over [lo, hi] is a valid lower bound.
    """
    rows = _Rows()
    for i, g in enumerate(groups):
        allowed = np.nonzero(upper[g] > 0)[0]
        if allowed.size == 0:
            continue
        dt = orders[i]
        q_lo, q_hi = allowed[0], allowed[-1]
        lo = dt[q_lo - 1] if q_lo > 0 else 0.0
        hi = dt[q_hi] if q_hi < len(dt) else total
        if hi - lo <= 1e-12:
            continue
        order = mvars[i]
        for r in range(max(q_lo - 1, 0), min(q_hi + 1, len(dt))):
            f_lo, f_hi = min(lo, dt[r]), min(hi, dt[r])
            slope = (f_hi - f_lo) / (hi - lo)
            # m >= f_lo + slope (S - lo)
            rows.add([(order[r], -1.0), (L.S(i), slope)], slope * lo - f_lo)
    if not rows.rhs:
        return problem.with_upper(upper)
    a_cut, b_cut = rows.matrix(L.size)
    return LpProblem(
        problem.objective,
        problem.a_eq,
        problem.b_eq,
        sparse.vstack([problem.a_ub, a_cut], format="csr"),
        np.concatenate([problem.b_ub, b_cut]),
        upper,
    )


# ---------------------------------------------------------------------------
# grid search (n <= 3)


def simplex_grid(n: int, steps: int, total: float = 1.0) -> np.ndarray:
    """All points of the simplex with coordinates on multiples of total/steps."""
    if n == 1:
        return np.array([[total]])
    pts = []

    def rec(prefix: list[int], remaining: int, left: int) -> None:
        if left == 1:
            pts.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, left - 1)

    rec([], steps, n)
    return np.asarray(pts, dtype=float) * (total / steps)


def solve_offline_grid(
    h: History,
    cfg: NetworkConfig,
    *,
    step: float = 0.02,
    refinements: int = 3,
    chunk: int = 200_000,
) -> OfflineSolution:
    """Grid search over the simplex with local refinement; practical for n <= 3."""
    if h.extended or cfg.n > 3:
        raise ValueError("grid search supports base-model histories with n <= 3")
    D, P = h.arrays()
    total = h.total
    steps = int(round(total / step))
    pts = simplex_grid(cfg.n, steps, total)
    best_val, best = _grid_best(pts, D, P, cfg, chunk)
    h_step = total / steps
    for _ in range(refinements):
        fine = h_step / 10
        offsets = simplex_offsets(cfg.n, 20) * fine
        cand = best[None, :] + offsets
        cand = cand[np.all(cand >= -1e-15, axis=1)]
        cand = np.maximum(cand, 0.0)
        val, pt = _grid_best(cand, D, P, cfg, chunk)
        if val < best_val:
            best_val, best = val, pt
        h_step = fine
    return OfflineSolution(_as_inventory(best, total), float(best_val), SolverKind.GRID, 0.0)


def simplex_offsets(n: int, radius: int) -> np.ndarray:
    """Integer vectors summing to 0 with entries in [-radius, radius]."""
    axes = np.meshgrid(*[np.arange(-radius, radius + 1)] * (n - 1), indexing="ij")
    head = np.stack([a.ravel() for a in axes], axis=1)
    last = -head.sum(axis=1, keepdims=True)
    out = np.hstack([head, last])
    return out[np.abs(last[:, 0]) <= radius].astype(float)


def _grid_best(pts: np.ndarray, D: np.ndarray, P: np.ndarray, cfg: NetworkConfig, chunk: int) -> tuple[float, np.ndarray]:
    per = max(1, chunk // max(1, len(D)))
    vals = np.concatenate([offline_objective_batch(pts[k:k + per], D, P, cfg) for k in range(0, len(pts), per)])
    k = int(np.argmin(vals))
    return float(vals[k]), pts[k]


# ---------------------------------------------------------------------------
# extended model LP


def _solve_offline_lp_extended(h: History, cfg: NetworkConfig) -> OfflineSolution:
    n, total = cfg.n, h.total
    c = arc_costs(cfg)
    H = len(h.samples[0])
    nw = H * n
    width = nw + c.size
    t = len(h.samples)
    B = flow_balance_matrix(n)
    eq_blocks, ub_blocks, objective, upper = [], [], [np.zeros(n)], [np.full(n, total)]
    for period in h.samples:
        Ps = [sub.od_matrix for sub in period]
        ops = extended_operators(Ps)
        eq_blocks.append(sparse.hstack([sparse.csr_matrix(-np.hstack(ops.net)), B]))
        rows = np.zeros((nw, nw))
        for k in range(H):
            rows[k * n:(k + 1) * n, k * n:(k + 1) * n] = np.eye(n)
            for o in range(k):
                rows[k * n:(k + 1) * n, o * n:(o + 1) * n] = -ops.onhand[k][o]
        ub_blocks.append(sparse.hstack([sparse.csr_matrix(rows), sparse.csr_matrix((nw, c.size))]))
        a = np.concatenate([cfg.fulfillment_weights(P) for P in Ps])
        objective.append(np.concatenate([-a, c]))
        upper.append(np.concatenate([np.concatenate([sub.demand for sub in period]), np.full(c.size, np.inf)]))
    a_eq = sparse.vstack(
        [
            sparse.hstack([sparse.csr_matrix((t * n, n)), sparse.block_diag(eq_blocks)]),
            sparse.hstack([sparse.csr_matrix(np.ones((1, n))), sparse.csr_matrix((1, t * width))]),
        ],
        format="csr",
    )
    b_eq = np.concatenate([np.zeros(t * n), [total]])
    # w_k - x_k(w) <= S
    a_ub = sparse.hstack([sparse.vstack([-sparse.identity(n)] * (t * H)), sparse.block_diag(ub_blocks)], format="csr")
    b_ub = np.zeros(t * nw)
    problem = LpProblem(np.concatenate(objective), a_eq, b_eq, a_ub, b_ub, np.concatenate(upper))
    sol = solve_or_raise(problem, "extended offline LP", _method_for(problem))
    return OfflineSolution(_as_inventory(sol.primal[:n], total), sol.objective, SolverKind.LP, 0.0)


# ---------------------------------------------------------------------------


def solve_offline(h: History, cfg: NetworkConfig, method: str = "auto") -> OfflineSolution:
    """Dispatch: LP under the cost condition, otherwise MILP (grid for large n <= 3 samples)."""
    if method == "auto":
        if h.extended or check_cost_condition(cfg, _od_list(h)):
            method = "lp"
        elif cfg.n <= 3 and len(h.samples) > MILP_MAX_SAMPLES:
            method = "grid"
        else:
            method = "milp"
    if method == "lp":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CostConditionWarning)
            return solve_offline_lp(h, cfg)
    if method == "milp":
        return solve_offline_milp(h, cfg)
    if method == "grid":
        return solve_offline_grid(h, cfg)
    raise ValueError(f"unknown offline method {method!r}")


Sampler = Callable[[np.random.Generator], "DemandSample | list[SubperiodSample]"]


def best_base_stock_saa(
    sampler: Sampler,
    m: int,
    cfg: NetworkConfig,
    rng: np.random.Generator,
    *,
    total: float = 1.0,
    method: str = "auto",
) -> OfflineSolution:
    """Solve the offline problem on m fresh draws; the clairvoyant benchmark."""
    if m < 1:
        raise ValueError("sample count must be at least 1")
    samples = [sampler(rng) for _ in range(m)]
    n = (samples[0][0] if isinstance(samples[0], (list, tuple)) else samples[0]).n
    return solve_offline(History(tuple(samples), InventoryVector.uniform(n, total)), cfg, method)


# ---------------------------------------------------------------------------
# policy evaluation


def policy_costs(S: InventoryVector, trace: Sequence, x1: InventoryVector, cfg: NetworkConfig) -> tuple[np.ndarray, list[InventoryVector]]:
    """Per-period modified costs of repositioning to S every period, and the states x_t."""
    costs = np.empty(len(trace))
    states = [x1]
    x = x1
    for k, period in enumerate(trace):
        if isinstance(period, DemandSample):
            costs[k] = modified_cost(x, S, period, cfg)
            x = state_update(S, period)
        else:
            out = simulate_extended_period(x, S, period, cfg)
            costs[k] = out.cost
            x = out.next_state
        states.append(x)
    return costs, states


def evaluate_policy(S: InventoryVector, trace: Sequence, x1: InventoryVector, cfg: NetworkConfig) -> float:
    """Cumulative modified cost of the base-stock policy S along the trace."""
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    return float(policy_costs(S, trace, x1, cfg)[0].sum())
