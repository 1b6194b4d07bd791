import csv
import io
import math

import pytest

from hfel import baselines, experiments
from hfel.errors import SolverError
from hfel.experiments import ExperimentPreset, PRESETS, results_csv, run_experiment, trial_weights

SMALL = ExperimentPreset("small", "n_devices", (6, 9), "cost", trials=2, n_servers=2,
                         schemes=("hfel", "uniform"))


def rows_of(text, kind):
    body = [line for line in text.splitlines() if line and not line.startswith("#")]
    out, header = [], None
    for rec in csv.reader(io.StringIO("\n".join(body))):
        if rec[0] == "table":
            header = rec
        elif rec[0] == kind:
            out.append(dict(zip(header, rec)))
    return out


def test_presets_cover_both_sweeps_and_weight_modes():
    assert set(PRESETS) == {f"{m}_vs_{s}" for m in ("delay", "energy", "cost") for s in ("devices", "servers")}
    assert PRESETS["cost_vs_devices"].values == (15, 30, 45, 60)
    assert PRESETS["cost_vs_devices"].n_servers == 5
    assert PRESETS["delay_vs_servers"].values == (5, 10, 15, 20, 25)
    assert PRESETS["delay_vs_servers"].n_devices == 60
    assert all(p.trials == 20 and set(p.schemes) == set(baselines.SCHEMES) for p in PRESETS.values())


@pytest.mark.parametrize("kw,match", [
    (dict(sweep="n_users"), "sweep"), (dict(values=()), "empty"), (dict(trials=0), "trials"),
    (dict(weights="latency"), "weight"), (dict(schemes=("hfel", "oracle")), "oracle")])
def test_preset_validation(kw, match):
    base = dict(name="p", sweep="n_devices", values=(5,), weights="cost")
    base.update(kw)
    with pytest.raises(ValueError, match=match):
        ExperimentPreset(**base)


def test_trial_weights():
    assert trial_weights("delay", 3) == (0.0, 1.0)
    assert trial_weights("energy", 3) == (1.0, 0.0)
    le, lt = trial_weights("cost", 3)
    assert 0 <= le <= 1 and le + lt == pytest.approx(1.0, abs=1e-15)
    assert trial_weights("cost", 3) == (le, lt) and trial_weights("cost", 4) != (le, lt)


def test_one_trial_two_schemes():
    res = run_experiment(SMALL, base_seed=0, trials=1)
    assert len(res.rows) == 4
    for v in SMALL.values:
        sel = [r for r in res.rows if r["sweep_value"] == v]
        assert [r["scheme"] for r in sel] == ["hfel", "uniform"]
        assert all("ratio" in r for r in sel)
        uni = next(r for r in sel if r["scheme"] == "uniform")
        assert uni["ratio"] == 1.0 and uni["system_ratio"] == 1.0


def test_trials_share_scenarios_and_seeds():
    res = run_experiment(SMALL, base_seed=40)
    seeds = {(r["sweep_value"], r["trial"]): r["seed"] for r in res.rows}
    assert all(s == 40 + t for (_, t), s in seeds.items())
    by_trial = {}
    for r in res.rows:
        by_trial.setdefault((r["sweep_value"], r["trial"]), set()).add((r["lambda_e"], r["n_devices"]))
    assert all(len(v) == 1 for v in by_trial.values())


def test_failed_trial_is_flagged_and_excluded(monkeypatch):
    real = baselines.run_scheme

    def flaky(name, world, cfg, seed, hfel_groups=None):
        if name == "uniform" and seed == 1 and world.n_devices == 6:
            raise SolverError("synthetic failure")
        return real(name, world, cfg, seed, hfel_groups)

    monkeypatch.setattr(baselines, "run_scheme", flaky)
    res = run_experiment(SMALL, base_seed=0)
    bad = [r for r in res.rows if r["status"] != "ok"]
    assert len(bad) == 1 and bad[0]["scheme"] == "uniform" and "synthetic failure" in bad[0]["status"]
    hfel_row = next(r for r in res.rows if r["scheme"] == "hfel" and r["seed"] == 1 and r["n_devices"] == 6)
    assert "ratio" not in hfel_row
    summary = {(s["sweep_value"], s["scheme"]): s for s in res.summary()}
    assert summary[(6, "hfel")]["trials"] == 1 and summary[(6, "hfel")]["excluded"] == 1
    assert summary[(9, "hfel")]["trials"] == 2
    kept = next(r for r in res.rows if r["scheme"] == "hfel" and r["seed"] == 0 and r["n_devices"] == 6)
    assert summary[(6, "hfel")]["mean_cost"] == kept["cost"]
    text = results_csv(res)
    assert "error: synthetic failure" in text


def test_csv_layout_and_determinism():
    a = results_csv(run_experiment(SMALL, base_seed=7))
    b = results_csv(run_experiment(SMALL, base_seed=7))
    assert a == b
    assert a.startswith("# hfel sweep results\n# format_version = 1\n")
    assert "# assumption cloud_link" in a and "# assumption channel_gain" in a
    trials = rows_of(a, "trial")
    summary = rows_of(a, "summary")
    assert len(trials) == 8 and len(summary) == 4
    for r in trials:
        assert float(r["cost"]) > 0 and math.isfinite(float(r["ratio"]))
    assert a != results_csv(run_experiment(SMALL, base_seed=8))


def test_parallel_matches_serial():
    serial = results_csv(run_experiment(SMALL, base_seed=3, trials=1))
    parallel = results_csv(run_experiment(SMALL, base_seed=3, trials=1, jobs=2))
    assert serial == parallel


def test_restricted_schemes_report_dominance():
    preset = ExperimentPreset("r", "n_servers", (2,), "cost", trials=1, n_devices=8,
                              schemes=("hfel", "computation_only", "communication_only_hfel", "uniform"))
    res = run_experiment(preset, base_seed=2)
    for r in res.rows:
        if r["scheme"] in experiments.RESTRICTED:
            assert r["dominance_violations"] == 0
        else:
            assert "dominance_violations" not in r
