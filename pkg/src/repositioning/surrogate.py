"""Surrogate-cost LPs shared by the online step, the offline problems and the tests.

Variables are laid out as ``[w, xi]`` where ``w`` holds the served demand (one
block of n per subperiod) and ``xi`` the off-diagonal repositioning flows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from repositioning.domain import DemandSample, InventoryVector, NetworkConfig, SubperiodSample
from repositioning.lp import LpProblem, arc_costs, flow_balance_matrix, solve_or_raise


@dataclass(frozen=True, eq=False)
class ExtendedOperators:
    """Linear maps from served demand w_o to later quantities of one review period.

    ``gamma[k][o]``: diagonal (as a vector) giving outstanding stock at the start
    of subperiod k from w_o. ``onhand[k][o]``: matrix giving the change in on-hand
    stock at the start of subperiod k from w_o. ``net[o]``: matrix giving the
    repositioning amount needed to restore the starting level.
    """

    gamma: tuple[tuple[np.ndarray, ...], ...]
    onhand: tuple[tuple[np.ndarray, ...], ...]
    net: tuple[np.ndarray, ...]


def extended_operators(od_matrices: Sequence[np.ndarray]) -> ExtendedOperators:
    H = len(od_matrices)
    n = od_matrices[0].shape[0]
    eye = np.eye(n)
    ret = [np.maximum(1.0 - P.sum(axis=1), 0.0) for P in od_matrices]
    # gamma[k][o] = prod_{l=o}^{k-1} r_l for o < k, zero otherwise; k runs to H
    gamma = [[np.zeros(n) for _ in range(H)] for _ in range(H + 1)]
    for o in range(H):
        acc = np.ones(n)
        for k in range(o + 1, H + 1):
            acc = acc * ret[k - 1]
            gamma[k][o] = acc.copy()
    onhand = [[np.zeros((n, n)) for _ in range(H)] for _ in range(H + 1)]
    for k in range(H + 1):
        for o in range(k):
            m = -eye + od_matrices[o].T
            for h in range(o + 1, k):
                m = m + od_matrices[h].T * gamma[h][o][None, :]
            onhand[k][o] = m
    net = tuple(-(onhand[H][o] + np.diag(gamma[H][o])) for o in range(H))
    return ExtendedOperators(
        tuple(tuple(g) for g in gamma),
        tuple(tuple(m) for m in onhand),
        net,
    )


def _flow_block(n: int, net_maps: Sequence[np.ndarray]) -> sparse.csr_matrix:
    """Rows: B xi - sum_o net[o] w_o = 0."""
    w_part = sparse.csr_matrix(-np.hstack(net_maps))
    return sparse.hstack([w_part, flow_balance_matrix(n)], format="csr")


@dataclass(frozen=True, eq=False)
class SurrogateSolution:
    objective: float
    served: np.ndarray  # shape (H, n)
    flows: np.ndarray  # off-diagonal arc flows
    cap_duals: np.ndarray  # shape (H, n), duals of w <= cap (nonpositive)
    stock_duals: np.ndarray | None = None  # duals of w_k <= x_k(y, w) when present


def solve_surrogate(
    od_matrices: Sequence[np.ndarray],
    caps: np.ndarray,
    cfg: NetworkConfig,
    start: np.ndarray | None = None,
) -> SurrogateSolution:
    """min c'xi - sum_k a_k'w_k s.t. flow balance, w_k <= caps[k], and,
    when ``start`` is given, w_k <= x_k(start, w) for the simulated stock.

    Rows of each OD matrix may sum to less than one; rentals not yet back at the
    end of the period are returned to their origin.
    """
    H = len(od_matrices)
    n = cfg.n
    caps = np.asarray(caps, dtype=float).reshape(H, n)
    ops = extended_operators(od_matrices)
    a = np.concatenate([cfg.fulfillment_weights(P) for P in od_matrices])
    c = arc_costs(cfg)
    nw = H * n
    objective = np.concatenate([-a, c])
    a_eq = _flow_block(n, ops.net)
    blocks = [sparse.hstack([sparse.identity(nw, format="csr"), sparse.csr_matrix((nw, c.size))], format="csr")]
    rhs = [caps.ravel()]
    if start is not None:
        rows = np.zeros((nw, nw))
        for k in range(H):
            rows[k * n:(k + 1) * n, k * n:(k + 1) * n] = np.eye(n)
            for o in range(k):
                rows[k * n:(k + 1) * n, o * n:(o + 1) * n] = -ops.onhand[k][o]
        blocks.append(sparse.hstack([sparse.csr_matrix(rows), sparse.csr_matrix((nw, c.size))], format="csr"))
        rhs.append(np.tile(np.asarray(start, dtype=float), H))
    p = LpProblem(objective, a_eq, np.zeros(n), sparse.vstack(blocks, format="csr"), np.concatenate(rhs))
    sol = solve_or_raise(p, "surrogate LP")
    duals = sol.duals_ub
    return SurrogateSolution(
        objective=sol.objective,
        served=sol.primal[:nw].reshape(H, n),
        flows=sol.primal[nw:],
        cap_duals=np.minimum(duals[:nw], 0.0).reshape(H, n),
        stock_duals=None if start is None else np.minimum(duals[nw:], 0.0).reshape(H, n),
    )


def surrogate_cost(y: InventoryVector, d: DemandSample, cfg: NetworkConfig) -> float:
    """Surrogate cost of policy y: the step LP with w <= min(y, d)."""
    yv = np.asarray(y, dtype=float)
    return solve_surrogate([d.od_matrix], np.minimum(yv, d.demand), cfg).objective


def extended_surrogate_cost(y: InventoryVector, subs: Sequence[SubperiodSample], cfg: NetworkConfig) -> float:
    """Extended surrogate: served demand bounded by true demand and simulated stock."""
    caps = np.array([s.demand for s in subs])
    return solve_surrogate([s.od_matrix for s in subs], caps, cfg, start=np.asarray(y, dtype=float)).objective
