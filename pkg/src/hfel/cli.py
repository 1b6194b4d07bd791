"""Command line entry point: ``hfel gen | solve | sweep | audit | fedsim``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import baselines, experiments, fedsim
from .allocation import ConstantsTable, grid_oracle, kkt_residuals
from .association import HistoryCache, make_strategy, optimal_evaluator, stability_audit
from .errors import HFELError
from .model import SystemConfig
from .scenario import ScenarioParams, generate_scenario, loads_scenario, read_scenario, write_scenario

EXAMPLE = "example3.txt"
SOLUTION_VERSION = 1


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _config(args) -> SystemConfig:
    return SystemConfig(theta=args.theta, epsilon=args.epsilon, mu=args.mu, delta=args.delta,
                        lambda_e=args.lambda_e, lambda_t=args.lambda_t, noise_N0=args.noise)


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--lambda-e", type=float, default=0.5, help="energy weight")
    g.add_argument("--lambda-t", type=float, default=0.5, help="delay weight")
    g.add_argument("--theta", type=float, default=0.9, help="local accuracy")
    g.add_argument("--epsilon", type=float, default=0.9, help="edge accuracy")
    g.add_argument("--mu", type=float, default=10.0)
    g.add_argument("--delta", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=1e-8, help="background noise power (W)")


def example_text() -> str:
    return resources.files("hfel").joinpath("data", EXAMPLE).read_text()


def _load(args):
    if args.example:
        return loads_scenario(example_text())
    if not args.scenario:
        raise HFELError("give --scenario PATH or --example")
    return read_scenario(args.scenario)


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    params = ScenarioParams(n_devices=args.devices, n_servers=args.servers, seed=args.seed,
                            area_m=args.area, radius_m=args.radius)
    scn = generate_scenario(params)
    if args.output in (None, "-"):
        from .scenario import dumps_scenario
        sys.stdout.write(dumps_scenario(scn))
    else:
        write_scenario(scn, args.output)
    return 0


# ---------------------------------------------------------------- solve

def solution_csv(result, cfg: SystemConfig, scheme: str, seed: int, source: str) -> str:
    out = io.StringIO()
    out.write("# hfel solution\n")
    out.write(f"# format_version = {SOLUTION_VERSION}\n# scheme = {scheme}\n# seed = {seed}\n# scenario = {source}\n")
    out.write(f"# lambda_e = {cfg.lambda_e!r}\n# lambda_t = {cfg.lambda_t!r}\n")
    out.write(f"# theta = {cfg.theta!r}\n# epsilon = {cfg.epsilon!r}\n# mu = {cfg.mu!r}\n# delta = {cfg.delta!r}\n")
    out.write(f"# noise_N0 = {cfg.noise_N0!r}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["table", "device", "server", "f_hz", "beta"])
    rows = []
    for i, sol in sorted(result.allocations.items()):
        if sol is None:
            continue
        for n in sol.members:
            rows.append((n, i, sol.freqs[n], sol.betas[n]))
    for n, i, f, b in sorted(rows):
        w.writerow(["device", n, i, repr(float(f)), repr(float(b))])
    w.writerow(["table", "server", "members", "energy_j", "delay_s", "weighted"])
    for i, sol in sorted(result.allocations.items()):
        if sol is None:
            continue
        c = sol.cost
        w.writerow(["group", i, " ".join(map(str, sol.members)), repr(c.energy), repr(c.delay), repr(c.weighted)])
    w.writerow(["table", "quantity", "energy_j", "delay_s", "weighted"])
    w.writerow(["total", "group_sum", "", "", repr(float(result.total))])
    s = result.system
    w.writerow(["total", "system", repr(s.energy), repr(s.delay), repr(s.weighted)])
    return out.getvalue()


def read_solution(text: str) -> dict:
    """Parse a solution file: header values, per-device (server, f, beta) and group costs."""
    meta, devices, groups, totals = {}, {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        cells = next(csv.reader([line]))
        kind = cells[0]
        try:
            if kind == "device":
                devices[int(cells[1])] = (int(cells[2]), float(cells[3]), float(cells[4]))
            elif kind == "group":
                groups[int(cells[1])] = float(cells[5])
            elif kind == "total":
                totals[cells[1]] = float(cells[4])
        except (ValueError, IndexError):
            raise HFELError(f"solution line {lineno}: malformed {kind} row") from None
    if meta.get("format_version") != str(SOLUTION_VERSION):
        raise HFELError(f"solution: unsupported format_version {meta.get('format_version')!r}")
    for key in ("lambda_e", "lambda_t"):
        if key not in meta:
            raise HFELError(f"solution: missing header field {key}")
    return dict(meta=meta, devices=devices, groups=groups, totals=totals)


def cmd_solve(args) -> int:
    scn = _load(args)
    cfg = _config(args)
    result = baselines.run_scheme(args.scheme, scn.world, cfg, args.seed)
    source = "bundled example" if args.example else Path(args.scenario).name
    _emit(solution_csv(result, cfg, args.scheme, args.seed, source), args.output)
    return 0


# ---------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    if args.preset not in experiments.PRESETS:
        raise HFELError(f"unknown preset {args.preset!r}; choose from {', '.join(sorted(experiments.PRESETS))}")
    preset = experiments.PRESETS[args.preset]
    if args.schemes:
        preset = replace(preset, schemes=tuple(args.schemes.split(",")))
    system = SystemConfig(theta=args.theta, epsilon=args.epsilon, mu=args.mu, delta=args.delta)
    res = experiments.run_experiment(preset, args.seed, args.trials, args.jobs, system=system)
    _emit(experiments.results_csv(res, system=system), args.output)
    return 0


# ---------------------------------------------------------------- audit

def cmd_audit(args) -> int:
    scn = _load(args)
    sol = read_solution(Path(args.solution).read_text())
    meta = sol["meta"]
    cfg = SystemConfig(theta=float(meta.get("theta", 0.9)), epsilon=float(meta.get("epsilon", 0.9)),
                       mu=float(meta.get("mu", 10.0)), delta=float(meta.get("delta", 1.0)),
                       lambda_e=float(meta["lambda_e"]), lambda_t=float(meta["lambda_t"]),
                       noise_N0=float(meta.get("noise_N0", 1e-8)))
    world = scn.world
    groups = {i: [] for i in range(world.n_servers)}
    for n, (i, _, _) in sol["devices"].items():
        if i not in groups:
            raise HFELError(f"solution assigns device {n} to unknown server {i}")
        groups[i].append(n)
    table = ConstantsTable(world, cfg)
    cache = HistoryCache(optimal_evaluator(world, cfg, args.tol))
    strategy = make_strategy(groups, world, cache)
    lines = [f"devices = {world.n_devices}", f"servers = {world.n_servers}"]
    worst_gap = 0.0
    worst_kkt = 0.0
    for i, members in strategy.groups.items():
        if not members:
            continue
        c = table.group(i, members)
        f = np.array([sol["devices"][n][1] for n in members])
        b = np.array([sol["devices"][n][2] for n in members])
        given = c.objective(f, b)
        best = strategy.allocations[i].cost.weighted
        worst_gap = max(worst_gap, (given - best) / best)
        opt = strategy.allocations[i]
        worst_kkt = max(worst_kkt, kkt_residuals(c, opt.freq_array(), opt.beta_array(), opt.tau_array(),
                                                 opt.price, opt.deadline)["max"])
        if args.oracle and len(members) <= 3:
            g = grid_oracle(members, world.devices, world.servers[i], cfg, args.grid, consts=c)
            lines.append(f"oracle server {i} = {(g.cost.weighted - best) / best!r}")
    moves = stability_audit(strategy, world, cache)
    lines.append(f"allocation_gap = {worst_gap!r}")
    lines.append(f"kkt_residual = {worst_kkt!r}")
    lines.append(f"improving_moves = {len(moves)}")
    for mv in moves:
        lines.append(f"move {mv.adjustment_type} devices {' '.join(map(str, mv.devices))} "
                     f"servers {' '.join(map(str, mv.servers))} delta {mv.delta!r}")
    ok = not moves and worst_gap <= args.gap_tol and worst_kkt <= args.tol
    lines.append(f"status = {'ok' if ok else 'violations'}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0 if ok else 1


# ---------------------------------------------------------------- fedsim

def cmd_fedsim(args) -> int:
    cfg = _config(args)
    if args.scenario or args.example:
        world = _load(args).world
    else:
        world = generate_scenario(ScenarioParams(n_devices=args.devices, n_servers=args.servers,
                                                 seed=args.seed)).world
    if args.association == "hfel":
        groups = baselines.hfel(world, cfg, args.seed)[0].groups
    else:
        groups = baselines.run_scheme(args.association, world, cfg, args.seed).groups
    steps, edge_rounds = fedsim.loop_counts(cfg)
    if args.local_steps:
        steps = args.local_steps
    if args.edge_rounds:
        edge_rounds = args.edge_rounds
    n = world.n_devices
    sizes = np.array([d.data_size for d in world.devices])
    if args.task == "quadratic":
        task = fedsim.quadratic_task(n, args.dim, args.seed, weights=sizes)
    else:
        task = fedsim.logistic_task(n, args.dim, seed=args.seed)
    traj = fedsim.run_global_rounds(task, groups, args.rounds, steps, edge_rounds, args.lr)
    meta = dict(task=args.task, dim=args.dim, seed=args.seed, association=args.association,
                local_steps=steps, edge_rounds=edge_rounds, lr=repr(args.lr))
    opt = task.optimum()
    if opt is not None:
        meta["optimal_objective"] = repr(task.objective(opt))
    _emit(fedsim.trajectory_csv(traj, meta), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hfel", description="Edge association and resource allocation for "
                                                          "hierarchical federated edge learning.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a random scenario file")
    g.add_argument("--devices", type=int, default=15)
    g.add_argument("--servers", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--area", type=float, default=500.0, help="square side (m)")
    g.add_argument("--radius", type=float, default=250.0, help="availability radius (m)")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    def scenario_flags(q):
        src = q.add_mutually_exclusive_group()
        src.add_argument("--scenario", help="scenario file")
        src.add_argument("--example", action="store_true", help="use the bundled 3-device example")

    s = sub.add_parser("solve", help="run one scheme on one scenario")
    scenario_flags(s)
    s.add_argument("--scheme", default="hfel", choices=baselines.SCHEMES)
    s.add_argument("--seed", type=int, default=0)
    _add_model_flags(s)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run an experiment preset")
    w.add_argument("--preset", required=True)
    w.add_argument("--trials", type=int)
    w.add_argument("--seed", type=int, default=0, help="base seed; trial k uses seed + k")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--schemes", help="comma-separated subset of schemes")
    w.add_argument("--theta", type=float, default=0.9)
    w.add_argument("--epsilon", type=float, default=0.9)
    w.add_argument("--mu", type=float, default=10.0)
    w.add_argument("--delta", type=float, default=1.0)
    w.add_argument("-o", "--output")
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="check a solution for optimality and stability")
    scenario_flags(a)
    a.add_argument("--solution", required=True)
    a.add_argument("--tol", type=float, default=1e-6, help="KKT residual tolerance")
    a.add_argument("--gap-tol", type=float, default=1e-6, help="allowed relative excess over the optimal group cost")
    a.add_argument("--oracle", action="store_true", help="also compare groups of up to 3 devices with a grid search")
    a.add_argument("--grid", type=int, default=200)
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_audit)

    f = sub.add_parser("fedsim", help="simulate hierarchical averaging on a synthetic task")
    scenario_flags(f)
    f.add_argument("--devices", type=int, default=15)
    f.add_argument("--servers", type=int, default=5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--association", default="greedy", choices=("hfel", "greedy", "random"))
    f.add_argument("--task", default="quadratic", choices=("quadratic", "logistic"))
    f.add_argument("--dim", type=int, default=10)
    f.add_argument("--rounds", type=int, default=50)
    f.add_argument("--lr", type=float, default=0.1)
    f.add_argument("--local-steps", type=int, help="override the rounded-up local iteration count")
    f.add_argument("--edge-rounds", type=int, help="override the rounded-up edge iteration count")
    _add_model_flags(f)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fedsim)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HFELError, ValueError, OSError) as exc:
        print(f"hfel {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
