"""Joint bandwidth / CPU-frequency allocation inside one edge server's group.

The group cost is

    C = sum_n (a_n/beta_n + b_n f_n^2) + w * max_n (comm_n/beta_n + cyc_n/f_n)

with sum(beta) <= 1 and each f_n in its box.  :func:`solve_allocation`
returns the exact minimizer together with the multipliers of the epigraph
form (deadline multipliers ``tau`` and bandwidth price ``phi``).

At an optimum every bandwidth share satisfies

    beta_n = (a_n + tau_n comm_n)^(1/2) / sum_m (a_m + tau_m comm_m)^(1/2)

and wherever f_n is strictly inside its box, tau_n = 2 b_n f_n^3 / cyc_n, which
turns the expression into a closed form in the frequencies alone
(:func:`closed_form_beta`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels, _oracle
from .errors import AvailabilityError, DegenerateInput, SolverError, StructuralError
from .model import CostBreakdown, GroupAllocation, SystemConfig, World, edge_iterations, local_iterations

DEFAULT_TOL = 1e-6
# box membership slack used when classifying frequencies as on a bound
_BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class GroupConstants:
    """Per-member constants of one group, ordered like ``members``.

    ``a``/``b`` already carry the energy weight and ``w`` the delay weight;
    ``e_up``/``e_cpu`` are the unweighted energy coefficients and
    ``edge_iters`` the edge iteration count, kept to split costs back into
    energy and delay.
    """

    server_id: int
    members: tuple
    a: np.ndarray
    b: np.ndarray
    comm_coeff: np.ndarray
    cmp_cycles: np.ndarray
    f_min: np.ndarray
    f_max: np.ndarray
    w: float
    e_up: np.ndarray
    e_cpu: np.ndarray
    edge_iters: float
    lambda_e: float
    lambda_t: float

    def __len__(self):
        return len(self.members)

    def objective(self, freqs, betas) -> float:
        """Weighted group cost written with the constants."""
        f = np.asarray(freqs, dtype=float)
        beta = np.asarray(betas, dtype=float)
        return float(np.sum(self.a / beta + self.b * f * f)
                     + self.w * np.max(self.comm_coeff / beta + self.cmp_cycles / f))

    def breakdown(self, freqs, betas) -> CostBreakdown:
        f = np.asarray(freqs, dtype=float)
        beta = np.asarray(betas, dtype=float)
        energy = float(np.sum(self.e_up / beta + self.e_cpu * f * f))
        delay = self.edge_iters * float(np.max(self.comm_coeff / beta + self.cmp_cycles / f))
        return CostBreakdown(energy, delay, self.lambda_e * energy + self.lambda_t * delay)


class ConstantsTable:
    """Constants of every (server, device) pair of a world, for fast group slicing."""

    def __init__(self, world: World, cfg: SystemConfig):
        self.world = world
        self.cfg = cfg
        n_dev, n_srv = world.n_devices, world.n_servers
        big_l = local_iterations(cfg)
        self.edge_iters = edge_iterations(cfg)
        self.comm = np.full((n_srv, n_dev), np.nan)
        self.e_up = np.full((n_srv, n_dev), np.nan)
        for s in world.servers:
            for n in s.available_devices:
                d = world.devices[n]
                se = math.log1p(d.channel_gain[s.id] * d.tx_power / cfg.noise_N0)
                self.comm[s.id, n] = d.update_size / (s.bandwidth * se)
                self.e_up[s.id, n] = self.edge_iters * self.comm[s.id, n] * d.tx_power
        self.cyc = np.array([big_l * d.cycles for d in world.devices])
        self.e_cpu = np.array([self.edge_iters * big_l * 0.5 * d.alpha * d.cycles for d in world.devices])
        self.f_min = np.array([d.f_min for d in world.devices])
        self.f_max = np.array([d.f_max for d in world.devices])
        self.available = [s.available_devices for s in world.servers]

    def group(self, server_id: int, members: Sequence[int]) -> GroupConstants:
        members = tuple(members)
        if not members:
            raise StructuralError(f"server {server_id}: empty group has no allocation problem")
        bad = [n for n in members if n not in self.available[server_id]]
        if bad:
            raise AvailabilityError(f"devices {bad} are not available to server {server_id}")
        idx = np.fromiter(members, dtype=np.intp, count=len(members))
        cfg = self.cfg
        e_up = self.e_up[server_id, idx]
        e_cpu = self.e_cpu[idx]
        return GroupConstants(
            server_id=server_id,
            members=members,
            a=cfg.lambda_e * e_up,
            b=cfg.lambda_e * e_cpu,
            comm_coeff=self.comm[server_id, idx],
            cmp_cycles=self.cyc[idx],
            f_min=self.f_min[idx],
            f_max=self.f_max[idx],
            w=cfg.lambda_t * self.edge_iters,
            e_up=e_up,
            e_cpu=e_cpu,
            edge_iters=self.edge_iters,
            lambda_e=cfg.lambda_e,
            lambda_t=cfg.lambda_t,
        )


def build_constants(group: Sequence[int], devices: Sequence, server, cfg: SystemConfig) -> GroupConstants:
    """Constants of ``group`` under ``server``, computed straight from the profiles."""
    members = tuple(group)
    if not members:
        raise StructuralError(f"server {server.id}: empty group has no allocation problem")
    bad = [n for n in members if n not in server.available_devices]
    if bad:
        raise AvailabilityError(f"devices {bad} are not available to server {server.id}")
    big_i = edge_iterations(cfg)
    big_l = local_iterations(cfg)
    devs = [devices[n] for n in members]
    comm = np.array([d.update_size / (server.bandwidth * math.log1p(d.channel_gain[server.id] * d.tx_power / cfg.noise_N0))
                     for d in devs])
    e_up = big_i * comm * np.array([d.tx_power for d in devs])
    e_cpu = np.array([big_i * big_l * d.alpha / 2 * d.cycles_per_sample * d.data_size for d in devs])
    return GroupConstants(
        server_id=server.id,
        members=members,
        a=cfg.lambda_e * e_up,
        b=cfg.lambda_e * e_cpu,
        comm_coeff=comm,
        cmp_cycles=np.array([big_l * d.cycles_per_sample * d.data_size for d in devs]),
        f_min=np.array([d.f_min for d in devs]),
        f_max=np.array([d.f_max for d in devs]),
        w=cfg.lambda_t * big_i,
        e_up=e_up,
        e_cpu=e_cpu,
        edge_iters=big_i,
        lambda_e=cfg.lambda_e,
        lambda_t=cfg.lambda_t,
    )


def _as_array(values, consts: GroupConstants) -> np.ndarray:
    if isinstance(values, Mapping):
        return np.array([values[n] for n in consts.members], dtype=float)
    return np.asarray(values, dtype=float)


def closed_form_beta(freqs, consts: GroupConstants, taus=None, power: float = 0.5) -> np.ndarray:
    """Bandwidth shares implied by the optimality conditions.

    With ``taus`` omitted the deadline multipliers are taken from the
    frequency stationarity condition, tau_n = 2 b_n f_n^3 / cyc_n, which is
    exact for devices whose optimal frequency is inside the box.  ``power``
    is the exponent applied to a_n + tau_n comm_n; only 0.5 satisfies the
    bandwidth stationarity condition, other values are kept for comparison.
    Frequencies may be an array ordered like ``consts.members`` or a mapping.
    """
    f = _as_array(freqs, consts)
    if taus is None:
        tau = 2.0 * consts.b * f ** 3 / consts.cmp_cycles
    else:
        tau = _as_array(taus, consts)
    x = consts.a + tau * consts.comm_coeff
    if not np.any(x > 0):
        raise DegenerateInput("all bandwidth weights vanish (zero energy weight)")
    r = x ** power
    return r / r.sum()


def reduced_objective(freqs, consts: GroupConstants, power: float = 0.5) -> float:
    """Group cost as a function of frequencies only, bandwidth from :func:`closed_form_beta`."""
    f = _as_array(freqs, consts)
    return consts.objective(f, closed_form_beta(f, consts, power=power))


@dataclass(frozen=True)
class SolverStats:
    evaluations: int
    kkt_residual: float
    converged: bool = True


@dataclass(frozen=True)
class AllocationSolution:
    server_id: int
    members: tuple
    freqs: Mapping[int, float]
    betas: Mapping[int, float]
    cost: CostBreakdown
    solver_stats: SolverStats
    taus: Mapping[int, float] = field(default_factory=dict)
    price: float = float("nan")
    deadline: float = float("nan")

    def as_group(self) -> GroupAllocation:
        return GroupAllocation(self.server_id, self.members, dict(self.freqs), dict(self.betas))

    def freq_array(self) -> np.ndarray:
        return np.array([self.freqs[n] for n in self.members])

    def beta_array(self) -> np.ndarray:
        return np.array([self.betas[n] for n in self.members])

    def tau_array(self) -> np.ndarray:
        return np.array([self.taus.get(n, 0.0) for n in self.members])


def _solution(consts, f, beta, tau=None, phi=float("nan"), t=float("nan"), evals=0, residual=float("nan")):
    m = consts.members
    taus = {} if tau is None else dict(zip(m, map(float, tau)))
    return AllocationSolution(
        server_id=consts.server_id,
        members=m,
        freqs=dict(zip(m, map(float, f))),
        betas=dict(zip(m, map(float, beta))),
        cost=consts.breakdown(f, beta),
        solver_stats=SolverStats(evals, residual),
        taus=taus,
        price=float(phi),
        deadline=float(t),
    )


def kkt_residuals(consts: GroupConstants, freqs, betas, taus, price: float, deadline: float) -> dict:
    """Relative violation of each optimality condition of the epigraph problem.

    Box multipliers on the frequencies are recovered from the frequency
    stationarity equation, so a device on a bound only counts as violating
    when the recovered multiplier would be negative.
    """
    f = _as_array(freqs, consts)
    beta = _as_array(betas, consts)
    tau = _as_array(taus, consts)
    a, b, comm, cyc, w = consts.a, consts.b, consts.comm_coeff, consts.cmp_cycles, consts.w
    tiny = np.finfo(float).tiny
    pull = (a + tau * comm) / beta ** 2
    stat_beta = np.abs(price - pull) / np.maximum(np.maximum(price, pull), tiny)
    g = 2.0 * b * f - tau * cyc / f ** 2
    scale = np.maximum(np.maximum(2.0 * b * f, tau * cyc / f ** 2), tiny)
    at_lo = f <= consts.f_min * (1.0 + _BOUND_RTOL)
    at_hi = f >= consts.f_max * (1.0 - _BOUND_RTOL)
    viol = np.abs(g)
    viol = np.where(at_lo & (g >= 0), 0.0, viol)
    viol = np.where(at_hi & (g <= 0), 0.0, viol)
    stat_f = viol / scale
    tsum = float(tau.sum())
    stat_t = abs(w - tsum) / max(w, tsum, tiny)
    completion = comm / beta + cyc / f
    slack_t = float(np.max(tau * np.abs(deadline - completion))) / (max(tsum, tiny) * deadline)
    slack_bw = abs(float(beta.sum()) - 1.0) if price > 0 else 0.0
    primal = max(0.0, float(np.max(completion)) / deadline - 1.0, float(beta.sum()) - 1.0,
                 float(np.max(consts.f_min / f)) - 1.0, float(np.max(f / consts.f_max)) - 1.0)
    out = {
        "stationarity_beta": float(stat_beta.max()),
        "stationarity_f": float(stat_f.max()),
        "stationarity_t": stat_t,
        "slackness_deadline": slack_t,
        "slackness_bandwidth": slack_bw,
        "dual_sign": float(max(0.0, -tau.min(), -price)),
        "primal": primal,
    }
    out["max"] = max(out.values())
    return out


def solve_constants(consts: GroupConstants, tol: float = DEFAULT_TOL) -> AllocationSolution:
    """Exact optimum of the group problem described by ``consts``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    beta, f, tau, phi, t, status, evals = _kernels.solve_group(
        consts.a, consts.b, consts.comm_coeff, consts.cmp_cycles, consts.f_min, consts.f_max, consts.w)
    f = np.clip(f, consts.f_min, consts.f_max)
    t = float(np.max(consts.comm_coeff / beta + consts.cmp_cycles / f))
    res = kkt_residuals(consts, f, beta, tau, phi, t)["max"]
    sol = _solution(consts, f, beta, tau, phi, t, int(evals), res)
    if status < 0 or not res <= tol:
        raise SolverError(
            f"server {consts.server_id}: allocation did not converge (status {status}, residual {res:.3g})",
            best=sol)
    return sol


def solve_allocation(group: Sequence[int], devices: Sequence, server, cfg: SystemConfig,
                     tol: float = DEFAULT_TOL) -> AllocationSolution:
    """Optimal frequencies and bandwidth shares for ``group`` on ``server``."""
    return solve_constants(build_constants(group, devices, server, cfg), tol)


def solve_bandwidth(consts: GroupConstants, freqs) -> AllocationSolution:
    """Optimal bandwidth shares with the frequencies held fixed."""
    f = _as_array(freqs, consts)
    beta, f_out, tau, phi, t, status, evals = _kernels.solve_group(
        consts.a, consts.b, consts.comm_coeff, consts.cmp_cycles, f, f, consts.w)
    if status < 0:
        raise SolverError(f"server {consts.server_id}: bandwidth subproblem did not converge")
    return _solution(consts, f, beta, tau, phi, t, int(evals))


def solve_frequencies(consts: GroupConstants, betas) -> AllocationSolution:
    """Optimal frequencies with the bandwidth shares held fixed."""
    beta = _as_array(betas, consts)
    f, t = _kernels.solve_fixed_beta(consts.b, consts.comm_coeff, consts.cmp_cycles,
                                     consts.f_min, consts.f_max, consts.w, beta)
    return _solution(consts, f, beta, t=t)


def fixed_allocation(consts: GroupConstants, freqs, betas) -> AllocationSolution:
    """Wrap a given (f, beta) pair as a solution without optimizing anything."""
    return _solution(consts, _as_array(freqs, consts), _as_array(betas, consts))


def _delay_only_betas(consts: GroupConstants, f: np.ndarray) -> np.ndarray:
    # f has shape (points, n); equalise completion times, vectorised bisection on t
    comm = consts.comm_coeff
    x = consts.cmp_cycles / f
    lo = x.max(axis=1)
    hi = lo + comm.sum()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = (comm / (mid[:, None] - x)).sum(axis=1)
        over = s > 1.0
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    beta = comm / (hi[:, None] - x)
    return beta / beta.sum(axis=1, keepdims=True)


def grid_nodes(lo: float, hi: float, grid_points: int) -> np.ndarray:
    """Geometric grid with ``grid_points`` intervals; doubling the count nests the grid."""
    k = np.arange(grid_points + 1)
    if hi <= lo:
        return np.array([lo])
    nodes = lo * (hi / lo) ** (k / grid_points)
    nodes[0], nodes[-1] = lo, hi
    return nodes


def grid_oracle(group: Sequence[int], devices: Sequence, server, cfg: SystemConfig,
                grid_points: int = 200, consts: GroupConstants | None = None,
                bandwidth: str = "exact") -> AllocationSolution:
    """Exhaustive search over a geometric frequency grid, for small groups.

    ``bandwidth`` picks how shares are set at each grid point: ``"exact"``
    computes the best split for those frequencies (an independent 1-D
    search), ``"closed_form"`` uses :func:`closed_form_beta`.  The closed form
    is only optimal at the optimal frequencies, so off the optimum it carries a
    penalty of first order in the grid spacing; the exact variant's error is
    second order.
    """
    if consts is None:
        consts = build_constants(group, devices, server, cfg)
    n = len(consts)
    if n > 4:
        raise ValueError(f"grid oracle refuses groups above 4 devices (got {n})")
    if grid_points < 50:
        raise ValueError("grid_points must be at least 50")
    if bandwidth not in ("exact", "closed_form"):
        raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
    axes = np.array([grid_nodes(lo, hi, grid_points) for lo, hi in zip(consts.f_min, consts.f_max)])
    delay_only = not np.any(consts.a + consts.b > 0)
    best_val = math.inf
    best_idx = None
    # sweep the first axis in slices to bound memory
    m = axes.shape[1]
    combos = list(itertools.product(range(m), repeat=n - 1))
    rest = np.array(combos, dtype=np.int64).reshape(len(combos), n - 1)
    for i0 in range(m):
        idx = np.column_stack([np.full(len(rest), i0), rest])
        f = axes[np.arange(n), idx]
        if delay_only:
            beta = _delay_only_betas(consts, f)
        else:
            tau = 2.0 * consts.b * f ** 3 / consts.cmp_cycles
            r = np.sqrt(consts.a + tau * consts.comm_coeff)
            beta = r / r.sum(axis=1, keepdims=True)
        vals = (np.sum(consts.a / beta + consts.b * f * f, axis=1)
                + consts.w * np.max(consts.comm_coeff / beta + consts.cmp_cycles / f, axis=1))
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_idx = idx[k].copy()
    if bandwidth == "exact":
        _, best_idx, _ = _oracle.grid_minimum(consts.a, consts.b, consts.comm_coeff, consts.cmp_cycles,
                                              axes, consts.w, best_idx)
    best_f = axes[np.arange(n), best_idx]
    if bandwidth == "exact":
        beta = np.empty(n)
        _oracle.best_split(consts.a, consts.comm_coeff, consts.cmp_cycles / best_f, consts.w, beta)
    elif delay_only:
        beta = _delay_only_betas(consts, best_f[None, :])[0]
    else:
        beta = closed_form_beta(best_f, consts)
    return _solution(consts, best_f, beta)
