"""Domain types and the delay/energy cost model of hierarchical federated edge learning.

Units: seconds, joules, hertz, watts; model sizes and link rates in nats
(natural logarithms throughout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ConstraintViolation, DegenerateInput, StructuralError, AvailabilityError

# relative slack when checking box constraints on solver output
_BOX_RTOL = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    theta: float = 0.9
    epsilon: float = 0.9
    mu: float = 10.0
    delta: float = 1.0
    lambda_e: float = 0.5
    lambda_t: float = 0.5
    noise_N0: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.mu <= 0 or self.delta <= 0:
            raise ValueError(f"mu and delta must be positive, got mu={self.mu}, delta={self.delta}")
        for name in ("lambda_e", "lambda_t"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.lambda_e + self.lambda_t <= 0:
            raise ValueError("lambda_e and lambda_t cannot both be zero")
        if self.noise_N0 <= 0:
            raise ValueError("noise_N0 must be positive")

    def with_weights(self, lambda_e: float, lambda_t: float) -> "SystemConfig":
        return SystemConfig(self.theta, self.epsilon, self.mu, self.delta,
                            lambda_e, lambda_t, self.noise_N0)


@dataclass(frozen=True)
class DeviceProfile:
    """One mobile device.

    ``channel_gain`` and ``distance`` are keyed by server id: the gain of a
    device depends on which server it uploads to.
    """

    id: int
    cycles_per_sample: float
    data_size: float
    f_min: float
    f_max: float
    alpha: float
    tx_power: float
    channel_gain: Mapping[int, float]
    update_size: float
    distance: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.f_min <= self.f_max:
            raise ValueError(f"device {self.id}: need 0 < f_min <= f_max")
        for name in ("cycles_per_sample", "data_size", "alpha", "tx_power", "update_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"device {self.id}: {name} must be positive")
        if any(g <= 0 for g in self.channel_gain.values()):
            raise ValueError(f"device {self.id}: channel gains must be positive")

    @property
    def cycles(self) -> float:
        """CPU cycles for one local iteration, c_n * |D_n|."""
        return self.cycles_per_sample * self.data_size


@dataclass(frozen=True)
class EdgeServerProfile:
    id: int
    bandwidth: float
    cloud_rate: float
    cloud_tx_power: float
    cloud_update_size: float
    available_devices: frozenset

    def __post_init__(self):
        if self.bandwidth <= 0 or self.cloud_rate <= 0 or self.cloud_update_size <= 0:
            raise ValueError(f"server {self.id}: bandwidth, cloud_rate, cloud_update_size must be positive")
        if self.cloud_tx_power < 0:
            raise ValueError(f"server {self.id}: cloud_tx_power must be nonnegative")
        if not self.available_devices:
            raise ValueError(f"server {self.id}: available_devices is empty")
        object.__setattr__(self, "available_devices", frozenset(self.available_devices))


@dataclass(frozen=True)
class World:
    """All devices and servers of one scenario, indexed by id (0..N-1, 0..K-1)."""

    devices: tuple
    servers: tuple

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "servers", tuple(self.servers))
        for k, d in enumerate(self.devices):
            if d.id != k:
                raise StructuralError(f"device at position {k} has id {d.id}")
        for k, s in enumerate(self.servers):
            if s.id != k:
                raise StructuralError(f"server at position {k} has id {s.id}")

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def servers_of(self, device_id: int) -> list:
        """Ids of the servers that can reach ``device_id``, ascending."""
        return [s.id for s in self.servers if device_id in s.available_devices]


@dataclass(frozen=True)
class GroupAllocation:
    server_id: int
    members: tuple
    freqs: Mapping[int, float]
    betas: Mapping[int, float]


@dataclass(frozen=True)
class CostBreakdown:
    energy: float
    delay: float
    weighted: float

    @classmethod
    def from_parts(cls, energy: float, delay: float, cfg: SystemConfig) -> "CostBreakdown":
        return cls(energy, delay, cfg.lambda_e * energy + cfg.lambda_t * delay)

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(self.energy + other.energy, self.delay + other.delay,
                             self.weighted + other.weighted)


ZERO_COST = CostBreakdown(0.0, 0.0, 0.0)


def local_iterations(cfg) -> float:
    """mu * ln(1/theta)."""
    return cfg.mu * math.log(1.0 / cfg.theta)


def edge_iterations(cfg) -> float:
    """delta * ln(1/epsilon) / (1 - theta)."""
    if cfg.theta == 1.0:
        raise DegenerateInput("edge iteration count is undefined at theta = 1")
    return cfg.delta * math.log(1.0 / cfg.epsilon) / (1.0 - cfg.theta)


def _check_freq(dev, f):
    lo = dev.f_min * (1.0 - _BOX_RTOL)
    hi = dev.f_max * (1.0 + _BOX_RTOL)
    if not lo <= f <= hi:
        raise ConstraintViolation(
            f"device {dev.id}: frequency {f:g} Hz outside [{dev.f_min:g}, {dev.f_max:g}]")


def _check_beta(dev, beta):
    if not 0.0 < beta <= 1.0 + _BOX_RTOL:
        raise ConstraintViolation(f"device {dev.id}: bandwidth ratio {beta!r} outside (0, 1]")


def comp_delay(dev, f: float, cfg) -> float:
    _check_freq(dev, f)
    return local_iterations(cfg) * dev.cycles_per_sample * dev.data_size / f


def comp_energy(dev, f: float, cfg) -> float:
    _check_freq(dev, f)
    return local_iterations(cfg) * 0.5 * dev.alpha * f * f * dev.cycles_per_sample * dev.data_size


def spectral_efficiency(dev, server_id: int, cfg) -> float:
    """ln(1 + h p / N0), nats per second per hertz."""
    return math.log1p(dev.channel_gain[server_id] * dev.tx_power / cfg.noise_N0)


def tx_rate(dev, beta: float, server, cfg) -> float:
    _check_beta(dev, beta)
    return beta * server.bandwidth * spectral_efficiency(dev, server.id, cfg)


def comm_delay_energy(dev, beta: float, server, cfg) -> tuple:
    """Upload (seconds, joules) of one local model at bandwidth share ``beta``."""
    rate = tx_rate(dev, beta, server, cfg)
    t = dev.update_size / rate
    return t, t * dev.tx_power


def group_cost(alloc: GroupAllocation, devices: Sequence, server, cfg) -> CostBreakdown:
    """Energy and delay of one edge server's group over all edge iterations."""
    members = list(alloc.members)
    if not members:
        return ZERO_COST
    if alloc.server_id != server.id:
        raise StructuralError(f"allocation is for server {alloc.server_id}, got server {server.id}")
    missing = [n for n in members if n not in server.available_devices]
    if missing:
        raise AvailabilityError(f"devices {missing} are not available to server {server.id}")
    if sum(alloc.betas[n] for n in members) > 1.0 + 1e-9:
        raise ConstraintViolation(f"server {server.id}: bandwidth ratios sum above 1")
    n_edge = edge_iterations(cfg)
    energy = 0.0
    slowest = 0.0
    for n in members:
        dev = devices[n]
        t_com, e_com = comm_delay_energy(dev, alloc.betas[n], server, cfg)
        f = alloc.freqs[n]
        energy += e_com + comp_energy(dev, f, cfg)
        slowest = max(slowest, t_com + comp_delay(dev, f, cfg))
    return CostBreakdown.from_parts(n_edge * energy, n_edge * slowest, cfg)


def cloud_delay_energy(server) -> tuple:
    """Edge-to-cloud upload (seconds, joules)."""
    t = server.cloud_update_size / server.cloud_rate
    return t, server.cloud_tx_power * t


def check_partition(groups: Mapping[int, Sequence], world: World) -> None:
    """Raise unless ``groups`` assigns every device to exactly one reachable server."""
    seen = {}
    for i, members in groups.items():
        if not 0 <= i < world.n_servers:
            raise StructuralError(f"unknown server {i}")
        for n in members:
            if n in seen:
                raise StructuralError(f"device {n} is in groups {seen[n]} and {i}")
            seen[n] = i
            if n not in world.servers[i].available_devices:
                raise AvailabilityError(f"device {n} is not available to server {i}")
    missing = set(range(world.n_devices)) - set(seen)
    if missing:
        raise StructuralError(f"devices {sorted(missing)} are not assigned")


def global_cost(allocations: Mapping[int, GroupAllocation], world: World, cfg) -> CostBreakdown:
    """System-wide energy and delay of one global iteration.

    Energy adds edge and cloud terms over servers; delay is the slowest
    server's edge phase plus its cloud upload.  Servers with an empty group
    upload nothing.
    """
    check_partition({i: a.members for i, a in allocations.items()}, world)
    energy = 0.0
    delay = 0.0
    for i, alloc in allocations.items():
        if not alloc.members:
            continue
        server = world.servers[i]
        edge = group_cost(alloc, world.devices, server, cfg)
        t_cloud, e_cloud = cloud_delay_energy(server)
        energy += edge.energy + e_cloud
        delay = max(delay, edge.delay + t_cloud)
    return CostBreakdown.from_parts(energy, delay, cfg)
