"""Inventory repositioning in closed networks with censored demand."""

__version__ = "0.1.0"

from repositioning.domain import (
    BIND_TOL,
    CensoredObservation,
    DemandSample,
    ExtendedState,
    InventoryVector,
    NetworkConfig,
    SubperiodSample,
)
from repositioning.lp import (
    LpError,
    LpProblem,
    LpSolution,
    LpStatus,
    min_cost_flow,
    project_simplex,
    repositioning_cost,
    solve_with_duals,
)
from repositioning.model import (
    censor,
    extended_modified_cost,
    lost_sales_cost,
    modified_cost,
    state_update,
    state_update_extended,
    total_cost,
)

from repositioning.offline import (
    CostConditionWarning,
    History,
    OfflineSolution,
    SolverKind,
    best_base_stock_saa,
    check_cost_condition,
    solve_offline,
    solve_offline_grid,
    solve_offline_lp,
    solve_offline_milp,
)
from repositioning.episode import EpisodeResult
from repositioning.soar import SoarState, run_soar, run_soar_extended, soar_extended_step, soar_step
from repositioning.baselines import OtlConfig, UncensoredOracle, run_dl_uncensored, run_fixed, run_nr, run_otl
from repositioning.datagen import ScenarioSpec, Trace, build_scenario, gen_trace, read_trace, write_trace
from repositioning.harness import ExperimentConfig, aggregate_ci, compute_regret_series, relative_regret, run_experiment
