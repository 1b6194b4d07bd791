"""Edge association by iterative device transfers and exchanges.

The system utility of a partition is the sum over servers of minus the
optimal group cost.  Starting from an initial partition, single-device
transfers and pairwise exchanges are applied whenever they raise the system
utility, until no permitted adjustment helps (a stable point).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .allocation import AllocationSolution, ConstantsTable, DEFAULT_TOL, solve_constants
from .errors import AvailabilityError, ScenarioError
from .model import CostBreakdown, GroupAllocation, SystemConfig, World, check_partition, global_cost

# Evaluates the allocation of one (server, members) group.
GroupEvaluator = Callable[[int, tuple], AllocationSolution]

ACCEPTED = "accepted"
NOT_MEMBER = "not_member"
SAME_SERVER = "same_server"
UNAVAILABLE = "unavailable"
DONOR_TOO_SMALL = "donor_too_small"
NO_GAIN = "no_gain"


def optimal_evaluator(world: World, cfg: SystemConfig, tol: float = DEFAULT_TOL) -> GroupEvaluator:
    """Group evaluator that solves the allocation problem exactly."""
    table = ConstantsTable(world, cfg)

    def evaluate(server_id, members):
        return solve_constants(table.group(server_id, members), tol)

    return evaluate


class HistoryCache:
    """Per-server record of group compositions already evaluated."""

    def __init__(self, evaluator: GroupEvaluator):
        self.evaluator = evaluator
        self.groups: dict = {}
        self.solves = 0
        self.hits = 0

    def solution(self, server_id: int, members) -> AllocationSolution | None:
        key = tuple(sorted(members))
        if not key:
            return None
        per_server = self.groups.setdefault(server_id, {})
        sol = per_server.get(key)
        if sol is None:
            sol = self.evaluator(server_id, key)
            per_server[key] = sol
            self.solves += 1
        else:
            self.hits += 1
        return sol

    def utility(self, server_id: int, members) -> float:
        sol = self.solution(server_id, members)
        return 0.0 if sol is None else -sol.cost.weighted


def group_utility(server_id: int, members, world: World, cache: HistoryCache) -> float:
    """Minus the optimal weighted cost of ``members`` on ``server_id``; 0 for an empty group."""
    server = world.servers[server_id]
    stray = [n for n in members if n not in server.available_devices]
    if stray:
        raise AvailabilityError(f"devices {stray} are not available to server {server_id}")
    return cache.utility(server_id, members)


@dataclass(frozen=True)
class AssociationStrategy:
    groups: Mapping[int, tuple]
    allocations: Mapping[int, AllocationSolution | None]
    utilities: Mapping[int, float]

    @property
    def utility(self) -> float:
        return float(sum(self.utilities.values()))

    @property
    def total_cost(self) -> float:
        """Sum of the group costs, the quantity the association minimizes."""
        return -self.utility

    def server_of(self) -> dict:
        return {n: i for i, members in self.groups.items() for n in members}

    def group_allocations(self) -> dict:
        out = {}
        for i, members in self.groups.items():
            sol = self.allocations[i]
            out[i] = GroupAllocation(i, (), {}, {}) if sol is None else sol.as_group()
        return out

    def system_cost(self, world: World, cfg: SystemConfig) -> CostBreakdown:
        """Energy, delay and weighted cost of one global iteration, cloud upload included."""
        return global_cost(self.group_allocations(), world, cfg)


def make_strategy(groups: Mapping[int, Sequence[int]], world: World, cache: HistoryCache) -> AssociationStrategy:
    full = {i: tuple(sorted(groups.get(i, ()))) for i in range(world.n_servers)}
    check_partition(full, world)
    allocs = {i: cache.solution(i, m) for i, m in full.items()}
    utils = {i: (0.0 if a is None else -a.cost.weighted) for i, a in allocs.items()}
    return AssociationStrategy(full, allocs, utils)


def _with_groups(strategy: AssociationStrategy, changes: dict, cache: HistoryCache) -> AssociationStrategy:
    groups = dict(strategy.groups)
    allocs = dict(strategy.allocations)
    utils = dict(strategy.utilities)
    for i, members in changes.items():
        groups[i] = members
        allocs[i] = cache.solution(i, members)
        utils[i] = 0.0 if allocs[i] is None else -allocs[i].cost.weighted
    return AssociationStrategy(groups, allocs, utils)


@dataclass(frozen=True)
class AdjustmentResult:
    accepted: bool
    reason: str
    delta: float
    strategy: AssociationStrategy


def _threshold(strategy: AssociationStrategy, min_gain: float) -> float:
    # relative to the cost scale so that solver round-off never counts as a gain
    return min_gain * max(strategy.total_cost, 1e-300)


def try_transfer(strategy: AssociationStrategy, device: int, source: int, target: int, world: World,
                 cache: HistoryCache, min_gain: float = 1e-9, min_donor_size: int = 3) -> AdjustmentResult:
    """Move ``device`` from ``source`` to ``target`` if that raises the system utility.

    The donor group must keep at least ``min_donor_size - 1`` members
    (the default requires the donor to have more than two).
    """
    groups = strategy.groups
    if device not in groups[source]:
        return AdjustmentResult(False, NOT_MEMBER, 0.0, strategy)
    if source == target:
        return AdjustmentResult(False, SAME_SERVER, 0.0, strategy)
    if device not in world.servers[target].available_devices:
        return AdjustmentResult(False, UNAVAILABLE, 0.0, strategy)
    if len(groups[source]) < min_donor_size:
        return AdjustmentResult(False, DONOR_TOO_SMALL, 0.0, strategy)
    new_src = tuple(n for n in groups[source] if n != device)
    new_dst = tuple(sorted(groups[target] + (device,)))
    delta = (cache.utility(source, new_src) + cache.utility(target, new_dst)
             - strategy.utilities[source] - strategy.utilities[target])
    if delta > _threshold(strategy, min_gain):
        return AdjustmentResult(True, ACCEPTED, delta,
                                _with_groups(strategy, {source: new_src, target: new_dst}, cache))
    return AdjustmentResult(False, NO_GAIN, delta, strategy)


def try_exchange(strategy: AssociationStrategy, n: int, m: int, world: World, cache: HistoryCache,
                 min_gain: float = 1e-9) -> AdjustmentResult:
    """Swap devices ``n`` and ``m`` between their groups if that raises the system utility."""
    where = strategy.server_of()
    i, j = where[n], where[m]
    if i == j:
        return AdjustmentResult(False, SAME_SERVER, 0.0, strategy)
    if n not in world.servers[j].available_devices or m not in world.servers[i].available_devices:
        return AdjustmentResult(False, UNAVAILABLE, 0.0, strategy)
    new_i = tuple(sorted([k for k in strategy.groups[i] if k != n] + [m]))
    new_j = tuple(sorted([k for k in strategy.groups[j] if k != m] + [n]))
    delta = (cache.utility(i, new_i) + cache.utility(j, new_j)
             - strategy.utilities[i] - strategy.utilities[j])
    if delta > _threshold(strategy, min_gain):
        return AdjustmentResult(True, ACCEPTED, delta, _with_groups(strategy, {i: new_i, j: new_j}, cache))
    return AdjustmentResult(False, NO_GAIN, delta, strategy)


def nearest_server(world: World, device: int) -> int:
    """Closest available server; ties go to the lower index."""
    dev = world.devices[device]
    options = world.servers_of(device)
    if not options:
        raise ScenarioError(f"device {device} has no available server")
    if not dev.distance:
        # without positions fall back to the strongest channel
        return min(options, key=lambda i: (-dev.channel_gain[i], i))
    return min(options, key=lambda i: (dev.distance.get(i, np.inf), i))


def initial_groups(world: World, policy: str = "random", seed: int = 0) -> dict:
    """Initial partition: each device on a uniformly drawn reachable server, or on its nearest one."""
    groups = {i: [] for i in range(world.n_servers)}
    rng = np.random.default_rng(seed)
    for n in range(world.n_devices):
        options = world.servers_of(n)
        if not options:
            raise ScenarioError(f"device {n} has no available server")
        if policy == "random":
            i = options[int(rng.integers(len(options)))]
        elif policy == "nearest":
            i = nearest_server(world, n)
        else:
            raise ValueError(f"unknown initialization policy {policy!r}")
        groups[i].append(n)
    return groups


def initialize(world: World, cache: HistoryCache, policy: str = "random", seed: int = 0) -> AssociationStrategy:
    return make_strategy(initial_groups(world, policy, seed), world, cache)


@dataclass(frozen=True)
class TraceRow:
    round: int
    adjustment_type: str
    devices: tuple
    servers: tuple
    delta: float
    global_cost_after: float


TRACE_COLUMNS = ["round", "adjustment_type", "devices", "servers", "delta", "global_cost_after"]


def trace_csv(rows: Sequence[TraceRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rows:
        w.writerow([r.round, r.adjustment_type, " ".join(map(str, r.devices)), " ".join(map(str, r.servers)),
                    repr(r.delta), repr(r.global_cost_after)])
    return out.getvalue()


@dataclass(frozen=True)
class AssociationCaps:
    max_rounds: int = 500
    exchange_attempts: int | None = None  # random exchanges per round, default N
    min_gain: float = 1e-9
    min_donor_size: int = 3


@dataclass(frozen=True)
class AssociationResult:
    strategy: AssociationStrategy
    trace: tuple
    rounds: int
    converged: bool
    initial_cost: float
    solves: int

    @property
    def accepted(self) -> int:
        return len(self.trace)


def _exchange_partner(strategy, world, where, n, rng):
    i = where[n]
    cands = [m for m, j in where.items()
             if j != i and n in world.servers[j].available_devices and m in world.servers[i].available_devices]
    if not cands:
        return None
    cands.sort()
    return cands[int(rng.integers(len(cands)))]


def _full_exchange_sweep(strategy, world, cache, caps, trace, rnd):
    n_dev = world.n_devices
    for n in range(n_dev):
        for m in range(n + 1, n_dev):
            res = try_exchange(strategy, n, m, world, cache, caps.min_gain)
            if res.accepted:
                strategy = res.strategy
                i, j = strategy.server_of()[m], strategy.server_of()[n]
                trace.append(TraceRow(rnd, "exchange", (n, m), (i, j), res.delta, strategy.total_cost))
    return strategy


def run_association(world: World, cache: HistoryCache, init: AssociationStrategy | None = None,
                    policy: str = "random", seed: int = 0,
                    caps: AssociationCaps = AssociationCaps()) -> AssociationResult:
    """Apply improving transfers and exchanges until none is left.

    Each round sweeps every (device, reachable server) transfer in index
    order, then tries ``exchange_attempts`` exchanges drawn from a generator
    seeded with ``seed``.  A round without any accepted move is followed by
    a sweep over every feasible exchange; the point is declared stable only
    if that sweep accepts nothing either.
    """
    strategy = init if init is not None else initialize(world, cache, policy, seed)
    initial_cost = strategy.total_cost
    rng = np.random.default_rng(seed)
    attempts = world.n_devices if caps.exchange_attempts is None else caps.exchange_attempts
    trace = []
    converged = False
    rnd = 0
    while rnd < caps.max_rounds:
        rnd += 1
        before = len(trace)
        for n in range(world.n_devices):
            for j in world.servers_of(n):
                i = strategy.server_of()[n]
                if j == i:
                    continue
                res = try_transfer(strategy, n, i, j, world, cache, caps.min_gain, caps.min_donor_size)
                if res.accepted:
                    strategy = res.strategy
                    trace.append(TraceRow(rnd, "transfer", (n,), (i, j), res.delta, strategy.total_cost))
        if world.n_servers > 1:
            for _ in range(attempts):
                where = strategy.server_of()
                n = int(rng.integers(world.n_devices))
                m = _exchange_partner(strategy, world, where, n, rng)
                if m is None:
                    continue
                res = try_exchange(strategy, n, m, world, cache, caps.min_gain)
                if res.accepted:
                    strategy = res.strategy
                    trace.append(TraceRow(rnd, "exchange", (n, m), (where[n], where[m]), res.delta,
                                          strategy.total_cost))
        if len(trace) > before:
            continue
        strategy = _full_exchange_sweep(strategy, world, cache, caps, trace, rnd)
        if len(trace) == before:
            converged = True
            break
    return AssociationResult(strategy, tuple(trace), rnd, converged, initial_cost, cache.solves)


@dataclass(frozen=True)
class ImprovingMove:
    adjustment_type: str
    devices: tuple
    servers: tuple
    delta: float


def stability_audit(strategy: AssociationStrategy, world: World, cache: HistoryCache, min_gain: float = 1e-9,
                    min_donor_size: int = 3) -> list:
    """Every permitted transfer or exchange that would still raise the utility."""
    found = []
    where = strategy.server_of()
    for n in range(world.n_devices):
        i = where[n]
        for j in world.servers_of(n):
            if j == i:
                continue
            res = try_transfer(strategy, n, i, j, world, cache, min_gain, min_donor_size)
            if res.accepted:
                found.append(ImprovingMove("transfer", (n,), (i, j), res.delta))
    for n in range(world.n_devices):
        for m in range(n + 1, world.n_devices):
            res = try_exchange(strategy, n, m, world, cache, min_gain)
            if res.accepted:
                found.append(ImprovingMove("exchange", (n, m), (where[n], where[m]), res.delta))
    return found
