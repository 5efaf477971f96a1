from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import network, point
from repositioning import DemandSample
from repositioning.datagen import (
    CostMode,
    DemandMode,
    ExtendedSpec,
    ScenarioSpec,
    Trace,
    TraceFormatError,
    build_scenario,
    censoring_twins,
    correlated_bounds,
    empirical_law,
    gen_correlation_factor,
    gen_costs,
    gen_demand_correlated,
    gen_demand_independent,
    gen_extended_od,
    gen_extended_trace,
    gen_trace,
    gen_transition_matrix,
    read_trace,
    rng_stream,
    total_variation,
    trace_from_dict,
    trace_to_dict,
    write_trace,
)
from repositioning.model import modified_cost, simulate_extended_period, state_update


class TestTransitionMatrix:
    def test_rows_sum_to_one(self, rng):
        for n in (2, 3, 10):
            P = gen_transition_matrix(n, rng)
            np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(P >= 0)

    def test_diagonal_dominance(self, rng):
        n = 10
        draws = np.array([gen_transition_matrix(n, rng) for _ in range(1000)])
        diag = draws[:, np.arange(n), np.arange(n)].mean()
        off = np.array([draws[:, i, j] for i in range(n) for j in range(2, n) if i != j]).mean()
        assert diag > off

    def test_heavy_columns(self, rng):
        draws = np.array([gen_transition_matrix(10, rng) for _ in range(500)])
        off = ~np.eye(10, dtype=bool)
        heavy = draws[:, 2:, :2].mean()
        light = draws[:, :, 2:][:, off[:, 2:]].mean()
        assert heavy > 5 * light

    def test_deterministic(self):
        a = gen_transition_matrix(6, rng_stream(3, "x"))
        b = gen_transition_matrix(6, rng_stream(3, "x"))
        np.testing.assert_array_equal(a, b)


class TestIndependentDemand:
    def test_support(self, rng):
        for n in (2, 5, 10):
            d = np.array([gen_demand_independent(n, rng) for _ in range(2000)])
            i = np.arange(1, n + 1)
            assert np.all(d >= 0.3 * i / n) and np.all(d <= 0.6 * (i + 1) / n)
            assert d.min() >= 0.3 / n and d.max() <= 1.2

    def test_last_location_support(self, rng):
        d = np.array([gen_demand_independent(10, rng)[-1] for _ in range(5000)])
        assert d.min() >= 0.3 and d.max() <= 0.66
        assert d.min() < 0.31 and d.max() > 0.65

    def test_last_location_mean(self):
        n = 10
        rng = rng_stream(1, "mean")
        d = np.array([gen_demand_independent(n, rng)[-1] for _ in range(100_000)])
        want = (0.3 + 0.6 * (n + 1) / n) / 2
        assert abs(d.mean() - want) <= 0.01 * want


class TestCorrelatedDemand:
    def test_bounds(self):
        lo, hi = correlated_bounds(10)
        assert lo[-1] == pytest.approx(0.4) and hi[-1] == pytest.approx(1.2)
        assert lo[0] == pytest.approx(0.22) and hi[0] == pytest.approx(0.48)

    def test_within_clamp(self, rng):
        for n in (2, 4, 10):
            A = gen_correlation_factor(n, rng)
            lo, hi = correlated_bounds(n)
            d = np.array([gen_demand_correlated(n, rng, A) for _ in range(2000)])
            assert np.all(d >= lo) and np.all(d <= hi)

    def test_construction_and_correlation(self, rng):
        """Rebuild the pre-clamp Gaussian from the same normal draws."""
        n = 5
        A = gen_correlation_factor(n, rng)
        lo, hi = correlated_bounds(n)
        pre = []
        for k in range(10_000):
            z = rng_stream(k, "z").standard_normal(n)
            v = 2.0 / n + np.sqrt(10.0) * np.array([sum(A[r, i] * z[r] for r in range(n)) for i in range(n)])
            np.testing.assert_allclose(gen_demand_correlated(n, rng_stream(k, "z"), A), np.clip(v, lo, hi), atol=1e-12)
            pre.append(v)
        pre = np.array(pre)
        rho = np.corrcoef(pre.T)[~np.eye(n, dtype=bool)]
        assert np.abs(rho).max() > 0.05
        np.testing.assert_allclose(np.cov(pre.T), 10 * A.T @ A, rtol=0.1)


class TestCosts:
    def test_high_lost_sales(self, rng):
        cfg = gen_costs(10, CostMode.HIGH_LOST_SALES, rng)
        off = ~np.eye(10, dtype=bool)
        assert np.all((cfg.lost_sales >= 1) & (cfg.lost_sales <= 2))
        assert np.all((cfg.repo_cost[off] >= 0.5) & (cfg.repo_cost[off] <= 1))
        np.testing.assert_array_equal(np.diag(cfg.repo_cost), 0.0)

    def test_high_repositioning(self, rng):
        cfg = gen_costs(10, "HighRepositioning", rng)
        off = ~np.eye(10, dtype=bool)
        assert np.all((cfg.repo_cost[off] >= 5) & (cfg.repo_cost[off] <= 10))
        np.testing.assert_array_equal(np.diag(cfg.repo_cost), 0.0)

    def test_high_repositioning_violates_condition(self, rng):
        """Violation per sampled (l, c, P) instance; see the row-wise rate printed."""
        n, trials, bad_instances, bad_rows = 10, 400, 0, 0
        for _ in range(trials):
            cfg = gen_costs(n, CostMode.HIGH_REPOSITIONING, rng)
            P = gen_transition_matrix(n, rng)
            lhs = (cfg.lost_sales * P).sum(axis=1)
            rhs = (P * cfg.repo_cost.T).sum(axis=1)
            rows = lhs < rhs
            bad_rows += rows.sum()
            bad_instances += rows.any()
        print(f"row-wise violation rate {bad_rows / (n * trials):.3f}")
        assert bad_instances / trials >= 0.95

    def test_deterministic(self):
        a = gen_costs(4, CostMode.HIGH_LOST_SALES, rng_stream(9, "c"))
        b = gen_costs(4, CostMode.HIGH_LOST_SALES, rng_stream(9, "c"))
        np.testing.assert_array_equal(a.lost_sales, b.lost_sales)
        np.testing.assert_array_equal(a.repo_cost, b.repo_cost)


class TestExtended:
    def test_od_row_sums(self, rng):
        for _ in range(200):
            s = gen_extended_od(10, rng).sum(axis=1)
            assert np.all((s >= 0.80) & (s <= 0.99))

    def test_trace_row_sums(self, rng):
        trace = gen_extended_trace(6, 4, 10, rng)
        assert trace.extended and trace.H == 4
        for period in trace:
            for sub in period:
                s = sub.od_matrix.sum(axis=1)
                assert np.all((s >= 0.80 - 1e-12) & (s <= 0.99 + 1e-12))

    def test_single_unit_scale_reduces_to_base(self, rng):
        n = 4
        trace = gen_extended_trace(n, 1, 20, rng, scale_range=(1.0, 1.0))
        cfg, x = network(n, rng), point(n, rng)
        for (sub,) in trace:
            np.testing.assert_allclose(sub.od_matrix.sum(axis=1), 1.0, atol=1e-12)
            y = point(n, rng)
            base = DemandSample(sub.demand, sub.od_matrix)
            out = simulate_extended_period(x, y, [sub], cfg)
            assert out.cost == pytest.approx(modified_cost(x, y, base, cfg), abs=1e-12)
            np.testing.assert_allclose(out.next_state.values, state_update(y, base).values, atol=1e-12)
            x = out.next_state

    def test_permutations(self):
        scen = build_scenario(ScenarioSpec(10, DemandMode.CORRELATED, seed=5, extended=ExtendedSpec(8)))
        perms = scen.permutations
        assert perms.shape == (8, 10)
        for p in perms:
            assert sorted(p) == list(range(10))
        assert len({tuple(p) for p in perms}) == 8

    def test_subperiod_demand_is_permuted_draw(self):
        n = 6
        scen = build_scenario(ScenarioSpec(n, DemandMode.CORRELATED, seed=2, extended=ExtendedSpec(3)))
        lo, hi = correlated_bounds(n)
        for period in gen_trace(scen, 30, 0):
            for h, sub in enumerate(period):
                src = scen.permutations[h]
                assert np.all(sub.demand >= lo[src] - 1e-15) and np.all(sub.demand <= hi[src] + 1e-15)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExtendedSpec(0)
        with pytest.raises(ValueError):
            ExtendedSpec(2, (0.9, 0.8))
        with pytest.raises(ValueError):
            ExtendedSpec(2, (0.0, 0.5))


class TestScenario:
    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioSpec(1)
        with pytest.raises(ValueError):
            ScenarioSpec(3, seed=-1)
        with pytest.raises(ValueError):
            ScenarioSpec(3, demand_mode="Poisson")

    def test_dict_round_trip(self):
        spec = ScenarioSpec(4, DemandMode.CORRELATED, CostMode.HIGH_REPOSITIONING, 2**63, ExtendedSpec(3, (0.85, 0.95)), True)
        assert ScenarioSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec

    def test_traces_deterministic(self):
        spec = ScenarioSpec(5, DemandMode.CORRELATED, seed=11)
        a = gen_trace(build_scenario(spec), 30, 2)
        b = gen_trace(build_scenario(spec), 30, 2)
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.demand, q.demand)
            np.testing.assert_array_equal(p.od_matrix, q.od_matrix)

    def test_runs_differ(self):
        scen = build_scenario(ScenarioSpec(5, seed=11))
        a, b = gen_trace(scen, 5, 0), gen_trace(scen, 5, 1)
        assert not np.array_equal(a[0].demand, b[0].demand)

    def test_fixed_od(self):
        scen = build_scenario(ScenarioSpec(4, seed=1, fixed_od=True))
        trace = gen_trace(scen, 10, 0)
        for p in trace:
            np.testing.assert_array_equal(p.od_matrix, trace[0].od_matrix)
        redrawn = gen_trace(build_scenario(ScenarioSpec(4, seed=1)), 10, 0)
        assert not np.array_equal(redrawn[0].od_matrix, redrawn[1].od_matrix)

    def test_streams_independent(self):
        a = rng_stream(1, "trace", 0).random(4)
        assert not np.array_equal(a, rng_stream(1, "trace", 1).random(4))
        assert not np.array_equal(a, rng_stream(2, "trace", 0).random(4))
        np.testing.assert_array_equal(a, rng_stream(1, "trace", 0).random(4))


class TestTwins:
    def test_validation(self):
        for args in ((0.5, 0.1, 0.4), (1.0, 0.1, 0.4), (0.7, 0.0, 0.4), (0.7, 0.1, 0.5), (0.7, 0.2, 0.2)):
            with pytest.raises(ValueError):
                censoring_twins(*args)

    def test_marginal(self):
        for law in censoring_twins(0.7, 0.1, 0.4):
            joint = law.joint_law()
            assert sum(q for (x, _), q in joint.items() if x == 1.0) == pytest.approx(0.5)

    def test_hand_example(self):
        for law in censoring_twins(0.7, 0.1, 0.4):
            got = law.censored_law(0.8, 0.2)
            assert set(got) == {(0.7, 0.2), (0.8, 0.2)}
            assert got[(0.7, 0.2)] == pytest.approx(0.5) and got[(0.8, 0.2)] == pytest.approx(0.5)

    def test_exact_laws(self):
        a, b = censoring_twins(0.7, 0.1, 0.4)
        for x0 in np.linspace(0, 1, 21):
            assert total_variation(a.censored_law(x0, 1 - x0), b.censored_law(x0, 1 - x0)) <= 1e-12
        assert total_variation(a.joint_law(), b.joint_law()) == pytest.approx(0.6)
        assert total_variation(a.censored_law(0.9, 0.9), b.censored_law(0.9, 0.9)) > 0.25

    def test_empirical(self):
        a, b = censoring_twins(0.7, 0.1, 0.4)
        xa, xb = a.sample(rng_stream(0, "a"), 100_000), b.sample(rng_stream(0, "b"), 100_000)
        for x0 in (0.0, 0.3, 0.75, 1.0):
            cut = np.array([x0, 1 - x0])
            assert total_variation(empirical_law(np.minimum(xa, cut)), empirical_law(np.minimum(xb, cut))) <= 0.01
        assert total_variation(empirical_law(xa), empirical_law(xb)) >= 0.25


class TestTraceFiles:
    def test_round_trip(self, tmp_path):
        trace = gen_trace(build_scenario(ScenarioSpec(4, DemandMode.CORRELATED, seed=3)), 12, 0)
        write_trace(trace, tmp_path / "t.json")
        back = read_trace(tmp_path / "t.json")
        assert back.scenario == trace.scenario and len(back) == 12
        for p, q in zip(trace, back):
            np.testing.assert_array_equal(p.demand, q.demand)
            np.testing.assert_array_equal(p.od_matrix, q.od_matrix)

    def test_extended_round_trip(self, tmp_path):
        scen = build_scenario(ScenarioSpec(3, seed=4, extended=ExtendedSpec(2)))
        trace = gen_trace(scen, 5, 0)
        write_trace(trace, tmp_path / "e.json")
        data = json.loads((tmp_path / "e.json").read_text())
        assert data["H"] == 2 and "subperiods" in data["periods"][0]
        back = read_trace(tmp_path / "e.json")
        assert back.extended and back.H == 2
        for p, q in zip(trace, back):
            for s, r in zip(p, q):
                np.testing.assert_array_equal(s.od_matrix, r.od_matrix)

    def test_extended_without_top_level_h(self, tmp_path):
        scen = build_scenario(ScenarioSpec(3, seed=4, extended=ExtendedSpec(2)))
        data = trace_to_dict(gen_trace(scen, 3, 0))
        del data["H"]
        assert trace_from_dict(data).H == 2
        data["H"] = 5
        with pytest.raises(TraceFormatError):
            trace_from_dict(data)

    def test_malformed_has_line_context(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "schema_version": 1,\n  "n": 2,,\n}\n')
        with pytest.raises(TraceFormatError, match=r"bad\.json:3:"):
            read_trace(path)

    def test_bad_period_names_index(self, tmp_path):
        data = trace_to_dict(gen_trace(build_scenario(ScenarioSpec(2)), 3, 0))
        data["periods"][1]["P"] = [[0.5, 0.6], [0.5, 0.5]]
        with pytest.raises(TraceFormatError, match="period 1"):
            trace_from_dict(data)

    def test_missing_field_and_version(self):
        data = trace_to_dict(gen_trace(build_scenario(ScenarioSpec(2)), 2, 0))
        with pytest.raises(TraceFormatError):
            trace_from_dict({k: v for k, v in data.items() if k != "periods"})
        with pytest.raises(TraceFormatError):
            trace_from_dict({**data, "schema_version": 99})

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            Trace((), ScenarioSpec(2))


@given(st.integers(0, 2**64 - 1), st.integers(2, 6), st.sampled_from(list(DemandMode)))
def test_generators_pure(seed, n, mode):
    spec = ScenarioSpec(n, mode, seed=seed)
    a, b = gen_trace(build_scenario(spec), 3, 0), gen_trace(build_scenario(spec), 3, 0)
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.demand, q.demand)
        np.testing.assert_array_equal(p.od_matrix, q.od_matrix)
        np.testing.assert_allclose(p.od_matrix.sum(axis=1), 1.0, atol=1e-12)
