"""Comparison schemes: simpler association rules and restricted allocations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .allocation import (ConstantsTable, DEFAULT_TOL, fixed_allocation, solve_bandwidth, solve_constants,
                         solve_frequencies)
from .association import (AssociationCaps, AssociationResult, HistoryCache, initial_groups, make_strategy,
                          optimal_evaluator, run_association)
from .model import CostBreakdown, SystemConfig, World


@dataclass(frozen=True)
class SchemeResult:
    """Outcome of one scheme on one scenario.

    ``system`` is the cost of a global iteration (cloud upload included,
    delay as the slowest server); ``total`` is the sum of group costs that
    the association step works on.
    """

    name: str
    groups: Mapping[int, tuple]
    system: CostBreakdown
    total: float
    group_costs: Mapping[int, float]
    allocations: Mapping = field(default_factory=dict, repr=False)
    accepted: int = 0
    rounds: int = 0
    converged: bool = True


def random_frequencies(world: World, seed: int) -> np.ndarray:
    """One uniformly drawn CPU frequency per device, fixed for the whole scenario."""
    rng = np.random.default_rng([seed, 1])
    lo = np.array([d.f_min for d in world.devices])
    hi = np.array([d.f_max for d in world.devices])
    return rng.uniform(lo, hi)


def uniform_evaluator(world: World, cfg: SystemConfig, freqs: np.ndarray):
    """Even bandwidth split, frequencies as given."""
    table = ConstantsTable(world, cfg)

    def evaluate(server_id, members):
        c = table.group(server_id, members)
        k = len(members)
        return fixed_allocation(c, freqs[list(members)], np.full(k, 1.0 / k))

    return evaluate


def proportional_evaluator(world: World, cfg: SystemConfig, freqs: np.ndarray):
    """Bandwidth inversely proportional to the device-server distance, frequencies as given."""
    table = ConstantsTable(world, cfg)

    def evaluate(server_id, members):
        c = table.group(server_id, members)
        inv = np.array([1.0 / max(world.devices[n].distance[server_id], 1e-12) for n in members])
        return fixed_allocation(c, freqs[list(members)], inv / inv.sum())

    return evaluate


def computation_evaluator(world: World, cfg: SystemConfig):
    """Even bandwidth split, best frequencies for it."""
    table = ConstantsTable(world, cfg)

    def evaluate(server_id, members):
        k = len(members)
        return solve_frequencies(table.group(server_id, members), np.full(k, 1.0 / k))

    return evaluate


def communication_evaluator(world: World, cfg: SystemConfig, freqs: np.ndarray):
    """Frequencies as given, best bandwidth split for them."""
    table = ConstantsTable(world, cfg)

    def evaluate(server_id, members):
        return solve_bandwidth(table.group(server_id, members), freqs[list(members)])

    return evaluate


def evaluate_groups(name: str, groups: Mapping[int, tuple], world: World, cfg: SystemConfig, evaluator,
                    assoc: AssociationResult | None = None) -> SchemeResult:
    strategy = make_strategy(groups, world, HistoryCache(evaluator))
    return _result(name, strategy, world, cfg, assoc)


def _result(name, strategy, world, cfg, assoc=None) -> SchemeResult:
    costs = {i: -u for i, u in strategy.utilities.items()}
    extra = {}
    if assoc is not None:
        extra = dict(accepted=assoc.accepted, rounds=assoc.rounds, converged=assoc.converged)
    return SchemeResult(name, dict(strategy.groups), strategy.system_cost(world, cfg), strategy.total_cost,
                        costs, dict(strategy.allocations), **extra)


def hfel(world: World, cfg: SystemConfig, seed: int, caps: AssociationCaps = AssociationCaps(),
         tol: float = DEFAULT_TOL) -> tuple:
    """Full scheme: association over exactly solved groups.  Returns (SchemeResult, AssociationResult)."""
    cache = HistoryCache(optimal_evaluator(world, cfg, tol))
    res = run_association(world, cache, policy="random", seed=seed, caps=caps)
    return _result("hfel", res.strategy, world, cfg, res), res


def random_association(world: World, cfg: SystemConfig, seed: int, tol: float = DEFAULT_TOL) -> SchemeResult:
    """Each device on a uniformly drawn reachable server, groups solved exactly."""
    return evaluate_groups("random", initial_groups(world, "random", seed), world, cfg,
                           optimal_evaluator(world, cfg, tol))


def greedy_association(world: World, cfg: SystemConfig, tol: float = DEFAULT_TOL) -> SchemeResult:
    """Devices in index order join their nearest reachable server, groups solved exactly."""
    return evaluate_groups("greedy", initial_groups(world, "nearest"), world, cfg,
                           optimal_evaluator(world, cfg, tol))


def computation_only(world: World, cfg: SystemConfig, groups: Mapping[int, tuple] | None = None,
                     name: str = "computation_only") -> SchemeResult:
    """Even bandwidth split with optimal frequencies; nearest-server groups unless ``groups`` is given."""
    if groups is None:
        groups = initial_groups(world, "nearest")
    return evaluate_groups(name, groups, world, cfg, computation_evaluator(world, cfg))


def communication_only(world: World, cfg: SystemConfig, seed: int, groups: Mapping[int, tuple] | None = None,
                       name: str = "communication_only") -> SchemeResult:
    """Random frequencies with the optimal bandwidth split; nearest-server groups unless ``groups`` is given."""
    if groups is None:
        groups = initial_groups(world, "nearest")
    return evaluate_groups(name, groups, world, cfg,
                           communication_evaluator(world, cfg, random_frequencies(world, seed)))


def _associated(name, world, cfg, seed, evaluator, caps):
    cache = HistoryCache(evaluator)
    res = run_association(world, cache, policy="random", seed=seed, caps=caps)
    return _result(name, res.strategy, world, cfg, res)


def uniform_allocation(world: World, cfg: SystemConfig, seed: int,
                       caps: AssociationCaps = AssociationCaps()) -> SchemeResult:
    """Even bandwidth, random frequencies, groups formed by the same adjustment process."""
    return _associated("uniform", world, cfg, seed,
                       uniform_evaluator(world, cfg, random_frequencies(world, seed)), caps)


def proportional_allocation(world: World, cfg: SystemConfig, seed: int,
                            caps: AssociationCaps = AssociationCaps()) -> SchemeResult:
    """Distance-proportional bandwidth, random frequencies, groups formed by the adjustment process."""
    return _associated("proportional", world, cfg, seed,
                       proportional_evaluator(world, cfg, random_frequencies(world, seed)), caps)


def optimal_group_costs(groups: Mapping[int, tuple], world: World, cfg: SystemConfig,
                        tol: float = DEFAULT_TOL) -> dict:
    """Exact optimal cost of each nonempty group, for restriction-dominance checks."""
    table = ConstantsTable(world, cfg)
    return {i: solve_constants(table.group(i, m), tol).cost.weighted for i, m in groups.items() if m}


SCHEMES = ("hfel", "random", "greedy", "computation_only", "communication_only",
           "computation_only_hfel", "communication_only_hfel", "uniform", "proportional")


def run_scheme(name: str, world: World, cfg: SystemConfig, seed: int,
               hfel_groups: Mapping[int, tuple] | None = None) -> SchemeResult:
    """Run one scheme by name.  The ``*_hfel`` variants reuse ``hfel_groups`` or compute them."""
    if name == "hfel":
        return hfel(world, cfg, seed)[0]
    if name.endswith("_hfel") and hfel_groups is None:
        hfel_groups = hfel(world, cfg, seed)[0].groups
    if name == "random":
        return random_association(world, cfg, seed)
    if name == "greedy":
        return greedy_association(world, cfg)
    if name == "computation_only":
        return computation_only(world, cfg)
    if name == "communication_only":
        return communication_only(world, cfg, seed)
    if name == "computation_only_hfel":
        return computation_only(world, cfg, hfel_groups, name)
    if name == "communication_only_hfel":
        return communication_only(world, cfg, seed, hfel_groups, name)
    if name == "uniform":
        return uniform_allocation(world, cfg, seed)
    if name == "proportional":
        return proportional_allocation(world, cfg, seed)
    raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
