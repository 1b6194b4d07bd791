"""Experiment presets, the Monte-Carlo runner and deterministic CSV output."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import baselines
from .errors import HFELError
from .model import SystemConfig
from .scenario import ScenarioParams, generate_scenario

FORMAT_VERSION = 1

SCHEMES = baselines.SCHEMES
RESTRICTED = {"computation_only", "communication_only", "computation_only_hfel", "communication_only_hfel"}
WEIGHT_MODES = ("delay", "energy", "cost")


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    sweep: str  # "n_devices" or "n_servers"
    values: tuple
    weights: str  # one of WEIGHT_MODES
    trials: int = 20
    n_devices: int = 60
    n_servers: int = 5
    schemes: tuple = SCHEMES

    def __post_init__(self):
        if self.sweep not in ("n_devices", "n_servers"):
            raise ValueError(f"preset {self.name}: sweep must be n_devices or n_servers")
        if not self.values:
            raise ValueError(f"preset {self.name}: empty sweep range")
        if self.trials < 1:
            raise ValueError(f"preset {self.name}: trials must be at least 1")
        if self.weights not in WEIGHT_MODES:
            raise ValueError(f"preset {self.name}: unknown weight mode {self.weights!r}")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"preset {self.name}: unknown schemes {sorted(unknown)}")


def _presets():
    out = {}
    for mode in WEIGHT_MODES:
        out[f"{mode}_vs_devices"] = ExperimentPreset(f"{mode}_vs_devices", "n_devices", (15, 30, 45, 60), mode,
                                                     n_servers=5)
        out[f"{mode}_vs_servers"] = ExperimentPreset(f"{mode}_vs_servers", "n_servers", (5, 10, 15, 20, 25), mode,
                                                     n_devices=60)
    return out


PRESETS = _presets()


def trial_weights(mode: str, seed: int) -> tuple:
    """(lambda_e, lambda_t) for one trial; the cost mode draws lambda_e uniformly with the pair summing to 1."""
    if mode == "delay":
        return 0.0, 1.0
    if mode == "energy":
        return 1.0, 0.0
    le = float(np.random.default_rng([seed, 2]).uniform())
    return le, 1.0 - le


@dataclass(frozen=True)
class TrialSpec:
    preset: ExperimentPreset
    point: int
    trial: int
    seed: int
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    system: SystemConfig = field(default_factory=SystemConfig)


ROW_COLUMNS = ["sweep_value", "trial", "seed", "n_devices", "n_servers", "lambda_e", "lambda_t", "scheme",
               "status", "cost", "energy", "delay", "system_cost", "ratio", "system_ratio", "accepted",
               "rounds", "converged", "dominance_violations"]


def run_trial(spec: TrialSpec) -> list:
    """All requested schemes on one shared scenario; one row dict per scheme."""
    preset = spec.preset
    n_dev = spec.point if preset.sweep == "n_devices" else preset.n_devices
    n_srv = spec.point if preset.sweep == "n_servers" else preset.n_servers
    params = ScenarioParams(**{**asdict(spec.scenario), "n_devices": n_dev, "n_servers": n_srv, "seed": spec.seed})
    world = generate_scenario(params).world
    le, lt = trial_weights(preset.weights, spec.seed)
    cfg = spec.system.with_weights(le, lt)
    wanted = list(preset.schemes)
    # the restricted variants on HFEL groups need the HFEL partition
    need_hfel = "hfel" in wanted or any(s.endswith("_hfel") for s in wanted)
    results = {}
    errors = {}
    hfel_groups = None
    if need_hfel:
        try:
            results["hfel"], _ = baselines.hfel(world, cfg, spec.seed)
            hfel_groups = results["hfel"].groups
        except HFELError as exc:
            errors["hfel"] = str(exc)
    for name in wanted:
        if name == "hfel" or name in results or name in errors:
            continue
        if name.endswith("_hfel") and hfel_groups is None:
            errors[name] = "hfel partition unavailable"
            continue
        try:
            results[name] = baselines.run_scheme(name, world, cfg, spec.seed, hfel_groups)
        except HFELError as exc:
            errors[name] = str(exc)
    base = results.get("uniform")
    rows = []
    for name in wanted:
        row = dict(sweep_value=spec.point, trial=spec.trial, seed=spec.seed, n_devices=n_dev, n_servers=n_srv,
                   lambda_e=le, lambda_t=lt, scheme=name)
        if name in errors:
            row.update(status="error: " + errors[name].replace("\n", " "))
            rows.append(row)
            continue
        r = results[name]
        row.update(status="ok", cost=r.total, energy=r.system.energy, delay=r.system.delay,
                   system_cost=r.system.weighted, accepted=r.accepted, rounds=r.rounds, converged=int(r.converged))
        if base is not None:
            row["ratio"] = r.total / base.total
            row["system_ratio"] = r.system.weighted / base.system.weighted
        if name in RESTRICTED:
            best = baselines.optimal_group_costs(r.groups, world, cfg)
            row["dominance_violations"] = sum(1 for i, c in best.items() if r.group_costs[i] < c * (1.0 - 1e-9))
        rows.append(row)
    return rows


@dataclass(frozen=True)
class ExperimentResult:
    preset: ExperimentPreset
    base_seed: int
    rows: tuple

    def ok_rows(self, scheme: str | None = None) -> list:
        return [r for r in self.rows if r["status"] == "ok" and (scheme is None or r["scheme"] == scheme)]

    def summary(self) -> list:
        """Per sweep point and scheme: means over the trials that succeeded for every scheme."""
        failed = {(r["sweep_value"], r["trial"]) for r in self.rows if r["status"] != "ok"}
        out = []
        for v in self.preset.values:
            for name in self.preset.schemes:
                sel = [r for r in self.rows if r["sweep_value"] == v and r["scheme"] == name
                       and (v, r["trial"]) not in failed]
                row = dict(sweep_value=v, scheme=name, trials=len(sel), excluded=self.preset.trials - len(sel))
                for key in ("cost", "energy", "delay", "system_cost", "ratio", "system_ratio", "accepted"):
                    vals = [r[key] for r in sel if key in r]
                    row[f"mean_{key}"] = float(np.mean(vals)) if vals else float("nan")
                out.append(row)
        return out


def run_experiment(preset: ExperimentPreset, base_seed: int = 0, trials: int | None = None,
                   jobs: int = 1, scenario: ScenarioParams | None = None,
                   system: SystemConfig | None = None) -> ExperimentResult:
    """Every sweep point times every trial; trial ``k`` uses scenario seed ``base_seed + k``."""
    if trials is not None:
        preset = replace(preset, trials=trials)
    scenario = scenario or ScenarioParams()
    system = system or SystemConfig()
    specs = [TrialSpec(preset, v, k, base_seed + k, scenario, system)
             for v in preset.values for k in range(preset.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            batches = list(pool.map(run_trial, specs))
    else:
        batches = [run_trial(s) for s in specs]
    rows = tuple(r for b in batches for r in b)
    return ExperimentResult(preset, base_seed, rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def assumptions(scenario: ScenarioParams | None = None, system: SystemConfig | None = None) -> dict:
    """Modelling choices echoed at the top of every result file."""
    s = scenario or ScenarioParams()
    c = system or SystemConfig()
    return {
        "log_base": "e (nats)",
        "channel_gain": f"g0*(l_ref/l)^kappa, g0={s.gain_g0!r}, l_ref={s.gain_ref_m!r} m, kappa={s.gain_exponent!r}",
        "cloud_link": f"rate={s.cloud_rate!r} nats/s, power={s.cloud_tx_power_w!r} W, size={s.cloud_update_nats!r} nats",
        "availability": f"servers within {s.radius_m!r} m, nearest-server fallback",
        "data_size": "MB*8e6 bits, cycles per local iteration = density*bits",
        "iterations": f"mu={c.mu!r}, delta={c.delta!r}, theta={c.theta!r}, epsilon={c.epsilon!r}",
        "cost": "sum of group weighted costs (association objective)",
        "system_cost": "weighted energy + slowest server delay incl. cloud upload",
        "ratio": "cost / uniform cost, same scenario",
    }


def results_csv(result: ExperimentResult, scenario: ScenarioParams | None = None,
                system: SystemConfig | None = None) -> str:
    """Trial rows then the per-point summary, each behind its own header, after a ``#`` preamble."""
    p = result.preset
    out = io.StringIO()
    out.write("# hfel sweep results\n")
    out.write(f"# format_version = {FORMAT_VERSION}\n")
    out.write(f"# preset = {p.name}\n# sweep = {p.sweep}\n# values = {' '.join(map(str, p.values))}\n")
    out.write(f"# weights = {p.weights}\n# trials = {p.trials}\n# base_seed = {result.base_seed}\n")
    out.write(f"# fixed n_devices = {p.n_devices}\n# fixed n_servers = {p.n_servers}\n")
    out.write(f"# schemes = {' '.join(p.schemes)}\n")
    for k, v in assumptions(scenario, system).items():
        out.write(f"# assumption {k} = {v}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["table"] + ROW_COLUMNS)
    for r in result.rows:
        w.writerow(["trial"] + [_fmt(r.get(c)) for c in ROW_COLUMNS])
    summary = result.summary()
    if summary:
        cols = list(summary[0])
        out.write("\n")
        w.writerow(["table"] + cols)
        for r in summary:
            w.writerow(["summary"] + [_fmt(r[c]) for c in cols])
    return out.getvalue()
