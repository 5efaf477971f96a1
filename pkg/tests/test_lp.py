from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from helpers import balanced
from oracles import mcf_networkx, project_grid, vertex_lp
from repositioning import NetworkConfig, project_simplex
from repositioning.lp import (
    LpError,
    LpProblem,
    LpStatus,
    min_cost_flow,
    repositioning_cost,
    repositioning_cost_batch,
    solve_or_raise,
    solve_with_duals,
)


def costs(c, n=None):
    c = np.asarray(c, float)
    return NetworkConfig(np.ones_like(c), c)


class TestSolveWithDuals:
    def test_trivial_minimum(self):
        sol = solve_with_duals(LpProblem(np.array([1.0])))
        assert sol.status is LpStatus.OPTIMAL
        assert sol.objective == 0.0
        np.testing.assert_allclose(sol.primal, [0.0])

    def test_single_constraint_dual(self):
        sol = solve_with_duals(LpProblem(np.array([-1.0]), a_ub=np.array([[1.0]]), b_ub=np.array([1.0])))
        assert sol.objective == pytest.approx(-1.0)
        assert sol.duals_ub[0] == pytest.approx(-1.0)

    def test_unbounded(self):
        sol = solve_with_duals(LpProblem(np.array([-1.0])))
        assert sol.status is LpStatus.UNBOUNDED

    def test_infeasible(self):
        p = LpProblem(np.array([1.0]), a_eq=np.array([[1.0]]), b_eq=np.array([-1.0]))
        assert solve_with_duals(p).status is LpStatus.INFEASIBLE
        with pytest.raises(LpError):
            solve_or_raise(p)

    def test_inconsistent_dimensions(self):
        with pytest.raises(ValueError):
            LpProblem(np.ones(2), a_ub=np.ones((1, 3)), b_ub=np.ones(1))

    def test_nonfinite_objective(self):
        with pytest.raises(ValueError):
            LpProblem(np.array([np.nan]))

    def test_sparse_input(self):
        p = LpProblem(np.array([-1.0, -2.0]), a_ub=sparse.csr_matrix(np.array([[1.0, 1.0]])), b_ub=np.array([1.0]))
        assert solve_with_duals(p).objective == pytest.approx(-2.0)

    def test_matches_vertex_enumeration(self, rng):
        for _ in range(25):
            A = rng.uniform(0.1, 1.0, (5, 5))
            b = rng.uniform(0.5, 2.0, 5)
            c = rng.uniform(-1.0, 1.0, 5)
            sol = solve_with_duals(LpProblem(c, a_ub=A, b_ub=b))
            assert sol.optimal
            assert sol.objective == pytest.approx(vertex_lp(c, A, b), abs=1e-6)

    def test_duality_and_slackness(self, rng):
        for _ in range(25):
            A = rng.uniform(0.1, 1.0, (4, 6))
            b = rng.uniform(0.5, 2.0, 4)
            c = rng.uniform(-1.0, 1.0, 6)
            sol = solve_with_duals(LpProblem(c, a_ub=A, b_ub=b))
            assert np.all(sol.duals_ub <= 1e-9)
            assert abs(sol.objective - sol.dual_objective) <= 1e-6
            slack = b - A @ sol.primal
            assert np.all(np.abs(slack * sol.duals_ub) <= 1e-6)
            assert np.all(A @ sol.primal <= b + 1e-8)

    def test_deterministic(self, rng):
        A = rng.uniform(0.1, 1.0, (4, 6))
        p = LpProblem(-np.ones(6), a_ub=A, b_ub=np.ones(4))
        a, b = solve_with_duals(p), solve_with_duals(p)
        np.testing.assert_array_equal(a.primal, b.primal)
        np.testing.assert_array_equal(a.duals_ub, b.duals_ub)


class TestMinCostFlow:
    def test_zero(self):
        value, flows = min_cost_flow(np.zeros(3), costs(np.ones((3, 3)) - np.eye(3)))
        assert value == 0.0
        assert np.all(flows == 0)

    def test_single_arc(self):
        value, flows = min_cost_flow(np.array([-0.3, 0.3]), costs([[0, 2], [2, 0]]))
        assert value == pytest.approx(0.6)
        assert flows[0, 1] == pytest.approx(0.3)

    def test_relay(self):
        c = [[0, 1, 5], [10, 0, 1], [10, 10, 0]]
        value, flows = min_cost_flow(np.array([-0.2, 0.0, 0.2]), costs(c))
        assert value == pytest.approx(0.4)
        assert flows[0, 1] == pytest.approx(0.2) and flows[1, 2] == pytest.approx(0.2)
        assert repositioning_cost(np.array([-0.2, 0.0, 0.2]), costs(c)) == pytest.approx(0.4)

    def test_unbalanced_rejected(self):
        with pytest.raises(ValueError):
            min_cost_flow(np.array([0.1, 0.2]), costs([[0, 1], [1, 0]]))
        with pytest.raises(ValueError):
            repositioning_cost(np.array([0.1, 0.2]), costs([[0, 1], [1, 0]]))

    def test_flows_balance(self, rng):
        for n in (3, 5, 8):
            c = rng.uniform(0.5, 2.0, (n, n))
            np.fill_diagonal(c, 0)
            delta = balanced(n, rng)
            value, flows = min_cost_flow(delta, costs(c))
            np.testing.assert_allclose(flows.sum(axis=0) - flows.sum(axis=1), delta, atol=1e-9)
            assert value == pytest.approx(float((c * flows).sum()), abs=1e-9)
            assert np.all(flows >= 0)

    def test_matches_networkx(self, rng):
        for n in (2, 3, 4, 6, 10):
            c = rng.uniform(0.5, 2.0, (n, n))
            np.fill_diagonal(c, 0)
            for _ in range(5):
                delta = balanced(n, rng, 0.2)
                assert min_cost_flow(delta, costs(c))[0] == pytest.approx(mcf_networkx(delta, c), abs=1e-5)

    def test_closed_form_agrees_with_lp(self, rng):
        for n in (3, 4, 6):
            c = rng.uniform(0.5, 2.0, (n, n))
            np.fill_diagonal(c, 0)
            cfg = costs(c)
            for _ in range(10):
                delta = np.zeros(n)
                src = rng.integers(n)
                delta[src] = -1.0
                others = [j for j in range(n) if j != src]
                delta[others] = rng.dirichlet(np.ones(n - 1))
                sign = rng.choice([-1.0, 1.0])
                assert repositioning_cost(sign * delta, cfg) == pytest.approx(min_cost_flow(sign * delta, cfg)[0], abs=1e-9)

    def test_batch_matches_single(self, rng):
        c = rng.uniform(0.5, 2.0, (5, 5))
        np.fill_diagonal(c, 0)
        cfg = costs(c)
        deltas = np.array([balanced(5, rng) for _ in range(8)])
        want = [repositioning_cost(d, cfg) for d in deltas]
        np.testing.assert_allclose(repositioning_cost_batch(deltas, cfg), want, atol=1e-9)

    def test_positive_iff_nonzero(self, rng):
        c = rng.uniform(0.5, 2.0, (4, 4))
        np.fill_diagonal(c, 0)
        assert repositioning_cost(np.zeros(4), costs(c)) == 0.0
        assert repositioning_cost(balanced(4, rng), costs(c)) > 0.0


class TestProjection:
    def test_idempotent(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(v).values, v, atol=1e-15)

    def test_symmetric(self):
        np.testing.assert_allclose(project_simplex(np.array([0.8, 0.8])).values, [0.5, 0.5])

    def test_example(self):
        np.testing.assert_allclose(project_simplex(np.array([1.0, 0.2])).values, [0.9, 0.1], atol=1e-12)
        np.testing.assert_allclose(project_grid([1.0, 0.2], 1e-3), [0.9, 0.1], atol=1e-9)

    def test_scaled_total(self):
        w = project_simplex(np.array([3.0, -1.0, 1.0]), 2.0)
        assert w.values.sum() == pytest.approx(2.0, abs=1e-12)
        np.testing.assert_allclose(w.values, [2.0, 0.0, 0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            project_simplex(np.array([np.inf, 0.0]))


seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(2, 10), st.floats(0.1, 5.0))
def test_projection_variational_inequality(seed, n, total):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) * 2
    p = project_simplex(v, total).values
    assert abs(p.sum() - total) <= 1e-12 * max(1.0, total)
    assert np.all(p >= 0)
    for _ in range(10):
        w = rng.dirichlet(np.ones(n)) * total
        assert (v - p) @ (w - p) <= 1e-8


@given(seeds, st.integers(2, 10))
def test_flow_subadditive_and_bounded(seed, n):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 3.0, (n, n))
    np.fill_diagonal(c, 0)
    cfg = costs(c)
    a, b = balanced(n, rng, 0.3), balanced(n, rng, 0.3)
    ma, mb, mab = (repositioning_cost(z, cfg) for z in (a, b, a + b))
    assert mab <= ma + mb + 1e-9
    assert ma <= 2 * c.max() * np.abs(a).sum() + 1e-9
    assert ma >= 0
