"""Regenerate the golden trace and its SOAR regret vector.

Run from the repository root only when the reference behaviour changes on purpose.
"""

from __future__ import annotations

import json
from pathlib import Path

from repositioning import InventoryVector
from repositioning.baselines import run_fixed
from repositioning.datagen import ScenarioSpec, build_scenario, gen_trace, rng_stream, write_trace
from repositioning.offline import best_base_stock_saa
from repositioning.soar import run_soar

HERE = Path(__file__).parent


def main() -> None:
    scen = build_scenario(ScenarioSpec(3, seed=2024))
    trace = gen_trace(scen, 50, 0)
    write_trace(trace, HERE / "golden_trace.json")
    S = best_base_stock_saa(scen.sample_period, 2000, scen.cfg, rng_stream(2024, "saa")).base_stock
    x1 = InventoryVector.uniform(3)
    soar = run_soar(trace.periods, x1, scen.cfg)
    bench = run_fixed(trace.periods, x1, S, scen.cfg)
    regret = (soar.costs - bench.costs).cumsum()
    ref = {"base_stock": S.values.tolist(), "regret": regret.tolist()}
    (HERE / "golden_regret.json").write_text(json.dumps(ref, indent=1) + "\n")


if __name__ == "__main__":
    main()
