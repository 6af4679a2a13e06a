"""Command line entry point: ``bbs-sense {grid,scenario,run,sweep,trace}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .errors import BBSError, InvalidConfigError
from .harness import (ALL_MECHANISMS, ExperimentConfig, ensure_writable, load_config,
                      manifest, normalize_mechanisms, run_experiment, run_instance,
                      threshold_trace, RUN_HEADER)
from .rng import child_seed
from .scenario import build_scenario, grid_for


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbs-sense",
                                description="Budgeted online incentive mechanism simulator.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in [
        ("grid", "write the road grid as id,x,y text"),
        ("scenario", "generate one scenario and save it as JSON"),
        ("run", "run every selected mechanism on one scenario"),
        ("sweep", "replicated sweep over budgets or arrival rates"),
        ("trace", "per-stage effort threshold series of the online mechanism"),
    ]:
        s = sub.add_parser(verb, help=help_)
        s.add_argument("--config", help="TOML config file")
        s.add_argument("--seed", type=int, help="master seed override (unsigned 64-bit)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--mechanisms", help="comma separated list of " + ",".join(ALL_MECHANISMS))
        s.add_argument("--sweep", choices=("budget", "lambda"), help="sweep axis")
        s.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise InvalidConfigError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.mechanisms is not None:
        changes["mechanisms"] = normalize_mechanisms(args.mechanisms.split(","))
    if args.sweep is not None:
        changes["sweep"] = args.sweep
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    return replace(cfg, **changes) if changes else cfg


def _write_manifest(out, cfg, verb):
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, verb), indent=1, sort_keys=True) + "\n")


def _run(verb: str, cfg: ExperimentConfig) -> str:
    if verb == "sweep":
        run_experiment(cfg)
        return f"{cfg.out}/metrics.csv"
    if verb == "trace":
        threshold_trace(cfg)
        return f"{cfg.out}/trace.csv"

    out = ensure_writable(cfg.out)
    scen_cfg, budget = cfg.point(cfg.sweep_values[0])
    if verb == "grid":
        (out / "grid.csv").write_text(grid_for(scen_cfg).to_text())
        return f"{out}/grid.csv"
    scenario = build_scenario(scen_cfg, child_seed(cfg.seed, 0, 0, 0))
    if verb == "scenario":
        scenario.save(out / "scenario.json")
        return f"{out}/scenario.json"
    # run
    res = run_instance(scenario, cfg.mechanism, budget, child_seed(cfg.seed, 0, 0, 1),
                       cfg.mechanisms, cfg.sweep_values[0], 0)
    (out / "runs.csv").write_text(RUN_HEADER + "\n" + "".join(r.csv(cfg.sweep) + "\n" for r in res.records))
    bbs = res.outcomes.get("bbs")
    if bbs is not None:
        (out / "events.csv").write_text(bbs.events_csv())
        (out / "stages.csv").write_text(bbs.stages_csv())
    scenario.save(out / "scenario.json")
    _write_manifest(out, cfg, verb)
    return f"{out}/runs.csv"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        print(_run(args.verb, cfg))
    except BBSError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
