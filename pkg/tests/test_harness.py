import json
import os
from dataclasses import replace
from pathlib import Path

import pytest

from bbs_sense import cli
from bbs_sense.errors import InvalidConfigError
from bbs_sense.harness import (ALL_MECHANISMS, ExperimentConfig, RunRecord, aggregate,
                               lambda_grid, load_config, quality_error_report,
                               run_experiment, threshold_trace)
from bbs_sense.rng import child_seed
from bbs_sense.scenario import ScenarioConfig, User

ROOT = Path(__file__).resolve().parents[1]
SMALL = ScenarioConfig(n_users=40, horizon=32, arrival_rate=1.5)


def small(tmp_path, **kw):
    base = dict(scenario=SMALL, budgets=(20.0,), replications=1, seed=5, out=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def test_lambda_grid_has_78_points():
    g = lambda_grid(0.3, 8.0, 0.1)
    assert len(g) == 78 and g[0] == 0.3 and g[-1] == 8.0


def test_one_row_per_mechanism(tmp_path):
    res = run_experiment(small(tmp_path))
    assert [r.mechanism for r in res.rows] == list(ALL_MECHANISMS)
    assert all(r.runs == 1 for r in res.rows)
    for r in res.rows:
        assert r.total_utility[1] == 0 and r.total_payment[0] <= 20.0 + 1e-9
    assert {p.name for p in tmp_path.iterdir()} >= {"metrics.csv", "runs.csv", "manifest.json"}
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["master_seed"] == 5 and "numpy" in man["versions"]


def test_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = small(a, replications=2, budgets=(10.0, 30.0), jobs=1)
    run_experiment(cfg)
    run_experiment(replace(cfg, out=str(b), jobs=2))
    for name in ("metrics.csv", "runs.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_lambda_sweep(tmp_path):
    cfg = small(tmp_path, sweep="lambda", lambdas=(0.5, 1.0), mechanisms=("bbs", "wta"))
    res = run_experiment(cfg, write=False)
    assert [(r.sweep_value, r.mechanism) for r in res.rows] == [
        (0.5, "bbs"), (0.5, "winner_take_all"), (1.0, "bbs"), (1.0, "winner_take_all")]


def test_invalid_configs():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(replications=0)
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(budgets=())
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(mechanisms=("nope",))
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({"experiment": {"colour": 1}})


def test_unwritable_output_fails_first(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(small(blocker / "sub"))


def test_child_seeds_distinct():
    seeds = {child_seed(1, s, r, k) for s in range(10) for r in range(30) for k in range(2)}
    assert len(seeds) == 600


def test_quality_error_report():
    u = {1: User(1, 0.5, 3, 0, 1, 0, 11), 2: User(2, 0.5, 3, 0, 1, 0, 12)}
    assert quality_error_report({}, u, 1.0) is None
    hi = quality_error_report({1: 9.0, 2: 9.0}, u, 1.0)
    lo = quality_error_report({1: 0.0, 2: 0.0}, u, 1.0)
    assert 0 <= hi < lo


def test_aggregate_absent_quality():
    recs = [RunRecord(1.0, 0, "bbs", 10, 3, 1.0, None, None),
            RunRecord(1.0, 1, "bbs", 14, 5, 2.0, 0.4, 0.2)]
    (row,) = aggregate(recs, [1.0], ["bbs"])
    assert row.total_utility == (12.0, 2.0)
    assert row.quality_error == (0.4, 0.0) and row.quality_error_runs == 1


def test_trace_short_horizon(tmp_path):
    cfg = small(tmp_path, scenario=replace(SMALL, horizon=2), replications=3)
    series = threshold_trace(cfg)
    assert all(len(s) <= 2 for s in series)
    assert (tmp_path / "trace.csv").read_text().startswith("sweep_value,")


def test_load_shipped_configs():
    cfg = load_config(ROOT / "configs" / "default.toml")
    assert cfg.replications == 30 and cfg.scenario.n_users == 200
    lam = load_config(ROOT / "configs" / "lambda.toml")
    assert len(lam.sweep_values) == 78


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("scenario.n_users = = 3")
    with pytest.raises(InvalidConfigError):
        load_config(p)


def test_cli_verbs(tmp_path, capsys):
    conf = tmp_path / "c.toml"
    conf.write_text("scenario.n_users = 30\nscenario.horizon = 16\nexperiment.replications = 1\n"
                    "experiment.budgets = [10.0]\n")
    for verb in ("grid", "scenario", "run", "sweep", "trace"):
        assert cli.main([verb, "--config", str(conf), "--seed", "3", "--out", str(tmp_path / verb)]) == 0
    assert (tmp_path / "run" / "events.csv").exists()
    assert (tmp_path / "grid" / "grid.csv").read_text().count("\n") == 4353 + 7


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["run", "--mechanisms", "bogus", "--out", str(tmp_path)]) != 0
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "invalid-config"
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert cli.main(["grid", "--out", str(blocker / "x")]) != 0
    assert json.loads(capsys.readouterr().err.strip())["error"] == "io"


def test_backends_give_identical_sweeps(tmp_path):
    import subprocess
    import sys
    conf = tmp_path / "c.toml"
    conf.write_text("scenario.n_users = 60\nscenario.horizon = 64\nexperiment.replications = 2\n"
                    "experiment.budgets = [30.0]\n")
    outs = []
    for flag in ("0", "1"):
        out = tmp_path / f"b{flag}"
        env = dict(os.environ, BBS_SENSE_PURE_PYTHON=flag)
        subprocess.run([sys.executable, "-m", "bbs_sense", "sweep", "--config", str(conf),
                        "--out", str(out)], check=True, env=env, capture_output=True)
        outs.append((out / "runs.csv").read_bytes())
    assert outs[0] == outs[1]
