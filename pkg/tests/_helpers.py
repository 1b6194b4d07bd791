"""Shared builders and independent reference evaluators for the tests."""

from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from hfel.allocation import build_constants
from hfel.model import CostBreakdown, SystemConfig
from hfel.scenario import ScenarioParams, build_world, generate_scenario


def crafted_world(device_xy, server_xy, density=50.0, size_bits=6e7, radius=1e6, **params):
    """World from explicit coordinates; scalar density/size are broadcast to every device."""
    device_xy = np.asarray(device_xy, dtype=float)
    server_xy = np.asarray(server_xy, dtype=float)
    n = len(device_xy)
    p = ScenarioParams(n_devices=n, n_servers=len(server_xy), radius_m=radius, **params)
    return build_world(p, device_xy, server_xy, np.broadcast_to(density, n).astype(float),
                       np.broadcast_to(size_bits, n).astype(float))


def random_group(seed: int, max_size: int = 3):
    """A random single-server group with random weights on the energy/delay simplex."""
    rng = np.random.default_rng([seed, 99])
    size = int(rng.integers(1, max_size + 1))
    world = generate_scenario(ScenarioParams(n_devices=size, n_servers=1, seed=seed)).world
    le = float(rng.uniform())
    cfg = SystemConfig(lambda_e=le, lambda_t=1.0 - le)
    members = tuple(range(size))
    consts = build_constants(members, world.devices, world.servers[0], cfg)
    return SimpleNamespace(world=world, cfg=cfg, members=members, consts=consts,
                           devices=world.devices, server=world.servers[0])


def reference_group_cost(members, freqs, betas, devices, server, cfg) -> CostBreakdown:
    """Group cost written out term by term from the device and server parameters."""
    big_l = cfg.mu * math.log(1 / cfg.theta)
    big_i = cfg.delta * math.log(1 / cfg.epsilon) / (1 - cfg.theta)
    energies, times = [], []
    for n in members:
        d = devices[n]
        rate = betas[n] * server.bandwidth * math.log(1 + d.channel_gain[server.id] * d.tx_power / cfg.noise_N0)
        t_up = d.update_size / rate
        cycles = d.cycles_per_sample * d.data_size
        energies.append(t_up * d.tx_power + big_l * d.alpha / 2 * freqs[n] ** 2 * cycles)
        times.append(t_up + big_l * cycles / freqs[n])
    energy = big_i * sum(energies)
    delay = big_i * max(times)
    return CostBreakdown(energy, delay, cfg.lambda_e * energy + cfg.lambda_t * delay)


def reference_global_cost(groups, freqs, betas, world, cfg) -> CostBreakdown:
    energy, delay = 0.0, 0.0
    for i, members in groups.items():
        if not members:
            continue
        s = world.servers[i]
        g = reference_group_cost(members, freqs, betas, world.devices, s, cfg)
        t_cloud = s.cloud_update_size / s.cloud_rate
        energy += g.energy + s.cloud_tx_power * t_cloud
        delay = max(delay, g.delay + t_cloud)
    return CostBreakdown(energy, delay, cfg.lambda_e * energy + cfg.lambda_t * delay)


def scalar_search(fn, lo: float, hi: float) -> tuple:
    """Bounded 1-D minimisation on a log scale; returns (x, value)."""
    res = minimize_scalar(lambda u: fn(math.exp(u)), bounds=(math.log(lo), math.log(hi)), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 2000})
    # the bounded method never evaluates the end points themselves
    cands = [(math.exp(res.x), res.fun), (lo, fn(lo)), (hi, fn(hi))]
    return min(cands, key=lambda c: c[1])


def single_device_optimum(consts) -> tuple:
    """(f, cost) of a one-device group, where the whole bandwidth goes to the device."""
    a, b, comm, cyc, w = (float(consts.a[0]), float(consts.b[0]), float(consts.comm_coeff[0]),
                          float(consts.cmp_cycles[0]), consts.w)
    return scalar_search(lambda f: a + b * f * f + w * (comm + cyc / f), float(consts.f_min[0]),
                         float(consts.f_max[0]))


def kkt_bandwidth_split(consts, freqs) -> np.ndarray:
    """Best bandwidth split at fixed frequencies, from a generic constrained solver.

    Epigraph form: minimise sum a/beta + w t subject to comm/beta + cyc/f <= t
    and sum beta = 1.
    """
    f = np.asarray(freqs, dtype=float)
    a, comm, x, w = consts.a, consts.comm_coeff, consts.cmp_cycles / f, consts.w
    n = len(a)
    scale = float(np.max(comm + x))

    def obj(z):
        return float(np.sum(a / z[:n]) + w * z[n] * scale)

    cons = [{"type": "eq", "fun": lambda z: np.sum(z[:n]) - 1.0},
            {"type": "ineq", "fun": lambda z: z[n] - (comm / z[:n] + x) / scale}]
    z0 = np.append(np.full(n, 1.0 / n), float(np.max(comm * n + x)) / scale)
    res = minimize(obj, z0, method="SLSQP", constraints=cons, bounds=[(1e-9, 1.0)] * n + [(0.0, None)],
                   options={"ftol": 1e-15, "maxiter": 2000})
    return res.x[:n]
