"""Regenerate tests/data/example3_expected.csv from an exhaustive grid search.

Run from the repository root: ``python3 tests/gen_golden.py``.  The file is
checked in; the CLI test compares ``hfel solve --example`` against it.
"""

from pathlib import Path

from hfel.allocation import grid_oracle
from hfel.baselines import SchemeResult
from hfel.cli import example_text, solution_csv
from hfel.model import SystemConfig, global_cost
from hfel.scenario import loads_scenario

GRID_POINTS = 200
OUT = Path(__file__).parent / "data" / "example3_expected.csv"


def golden() -> str:
    world = loads_scenario(example_text()).world
    cfg = SystemConfig(lambda_e=0.5, lambda_t=0.5)
    members = tuple(range(world.n_devices))
    sol = grid_oracle(members, world.devices, world.servers[0], cfg, GRID_POINTS)
    system = global_cost({0: sol.as_group()}, world, cfg)
    result = SchemeResult("grid", {0: members}, system, sol.cost.weighted, {0: sol.cost.weighted}, {0: sol})
    return solution_csv(result, cfg, f"grid_oracle {GRID_POINTS}", 0, "bundled example")


if __name__ == "__main__":
    OUT.write_text(golden())
    print(f"wrote {OUT}")
