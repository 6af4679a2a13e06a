"""Experiment configuration, seeded sweeps and CSV outputs."""
from __future__ import annotations

import io
import json
import math
import os
import platform
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, kernels
from .baselines import (FULL_KNOWLEDGE, INCENTIVE_COMPATIBLE, multiple_winners,
                        offline_reverse_auction, submissions_from, winner_take_all)
from .errors import InvalidConfigError
from .mechanism import MechanismConfig, last_stage_change, run_bbs
from .rng import ALGORITHM, child_seed, make_rng
from .scenario import ScenarioConfig, Scenario, build_scenario, measurement_error
from .threshold import parse_policy

BBS = "bbs"
WTA = "winner_take_all"
MW = "multiple_winners"
RA_FULL = "reverse_full_knowledge"
RA_IC = "reverse_incentive_compatible"
ALL_MECHANISMS = (BBS, WTA, MW, RA_FULL, RA_IC)
_ALIASES = {"wta": WTA, "mw": MW, "fk": RA_FULL, "ic": RA_IC, "ps": RA_IC}

RUN_HEADER = ("sweep,sweep_value,replication,mechanism,total_utility,participation,"
              "total_payment,quality_error,final_e_star")
METRIC_HEADER = ("sweep,sweep_value,mechanism,runs,total_utility_mean,total_utility_std,"
                 "participation_mean,participation_std,total_payment_mean,total_payment_std,"
                 "quality_error_mean,quality_error_std,quality_error_runs,"
                 "final_e_star_mean,final_e_star_std")
TRACE_HEADER = "sweep_value,replication,stage,t,e_star,m_star,sample_size,kept_previous"


def lambda_grid(start: float = 0.3, stop: float = 8.0, step: float = 0.1) -> list[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def normalize_mechanisms(names: Iterable[str]) -> tuple[str, ...]:
    out = []
    for name in names:
        name = _ALIASES.get(name.strip(), name.strip())
        if name not in ALL_MECHANISMS:
            raise InvalidConfigError(f"unknown mechanism {name!r}")
        if name not in out:
            out.append(name)
    if not out:
        raise InvalidConfigError("no mechanisms selected")
    return tuple(out)


@dataclass(frozen=True)
class MechanismParams:
    budget: float = 100.0
    initial_effort: float = 0.1
    initial_min_prize: float = 0.1
    threshold_branch_probability: float = 1.0 / 3.0
    routing_mode: str = "per_user"
    prize_policy: str = "grid_search:10"
    v_bar_mode: str = "fixed_point"
    secretary_sample: str = "one_over_e"
    secretary_fraction: float = 1.0 / math.e
    multiple_winners_L: int = 5

    def mechanism_config(self, scenario: ScenarioConfig, budget: float, seed: int) -> MechanismConfig:
        return MechanismConfig(
            total_budget=budget,
            horizon=max(1, scenario.horizon),
            initial_effort=self.initial_effort,
            initial_min_prize=self.initial_min_prize,
            threshold_branch_probability=self.threshold_branch_probability,
            routing_mode=self.routing_mode,
            prize_policy=parse_policy(self.prize_policy),
            seed=seed,
            c=scenario.c,
            v_bar_mode=self.v_bar_mode,
            secretary_sample=self.secretary_sample,
            secretary_fraction=self.secretary_fraction,
            expected_bidders=scenario.expected_bidders,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    mechanism: MechanismParams = field(default_factory=MechanismParams)
    sweep: str = "budget"
    budgets: tuple[float, ...] = (25.0, 50.0, 100.0, 200.0, 400.0)
    lambdas: tuple[float, ...] = tuple(lambda_grid())
    replications: int = 30
    seed: int = 0
    mechanisms: tuple[str, ...] = ALL_MECHANISMS
    out: str = "out"
    jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidConfigError("replications must be at least 1")
        if self.sweep not in ("budget", "lambda"):
            raise InvalidConfigError(f"sweep must be 'budget' or 'lambda', got {self.sweep!r}")
        if not self.sweep_values:
            raise InvalidConfigError("sweep list is empty")
        if any(b <= 0 for b in self.budgets):
            raise InvalidConfigError("budgets must be positive")
        if any(v <= 0 for v in self.lambdas):
            raise InvalidConfigError("arrival rates must be positive")
        object.__setattr__(self, "mechanisms", normalize_mechanisms(self.mechanisms))

    @property
    def sweep_values(self) -> tuple[float, ...]:
        return tuple(self.budgets if self.sweep == "budget" else self.lambdas)

    def point(self, value: float) -> tuple[ScenarioConfig, float]:
        """Scenario config and budget at one sweep value."""
        if self.sweep == "budget":
            return self.scenario, float(value)
        return replace(self.scenario, arrival_rate=float(value)), self.mechanism.budget

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budgets"] = list(self.budgets)
        d["lambdas"] = list(self.lambdas)
        d["mechanisms"] = list(self.mechanisms)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kwargs = {}
        if "scenario" in data:
            kwargs["scenario"] = ScenarioConfig.from_dict(data.pop("scenario"))
        if "mechanism" in data:
            mech = dict(data.pop("mechanism"))
            known = set(MechanismParams.__dataclass_fields__)
            unknown = set(mech) - known
            if unknown:
                raise InvalidConfigError(f"unknown mechanism keys: {sorted(unknown)}")
            kwargs["mechanism"] = MechanismParams(**mech)
        exp = dict(data.pop("experiment", {}))
        exp.update(data)
        lam = exp.pop("lambda_range", None)
        if lam is not None:
            exp["lambdas"] = lambda_grid(*lam)
        for key in ("budgets", "lambdas", "mechanisms"):
            if key in exp:
                exp[key] = tuple(exp[key])
        known = set(cls.__dataclass_fields__) - {"scenario", "mechanism"}
        unknown = set(exp) - known
        if unknown:
            raise InvalidConfigError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**kwargs, **exp)


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    """Read a TOML file of dotted keys (``scenario.*``, ``mechanism.*``, ``experiment.*``)."""
    if path is None:
        return ExperimentConfig()
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    try:
        data = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


@dataclass
class RunRecord:
    sweep_value: float
    replication: int
    mechanism: str
    total_utility: int
    participation: int
    total_payment: float
    quality_error: float | None
    final_e_star: float | None

    def csv(self, sweep: str) -> str:
        return ",".join([
            sweep, _fmt(self.sweep_value), str(self.replication), self.mechanism,
            str(self.total_utility), str(self.participation), _fmt(self.total_payment),
            _fmt(self.quality_error), _fmt(self.final_e_star),
        ])


@dataclass
class MetricRow:
    sweep_value: float
    mechanism: str
    runs: int
    total_utility: tuple[float, float]
    participation: tuple[float, float]
    total_payment: tuple[float, float]
    quality_error: tuple[float, float] | None
    quality_error_runs: int
    final_e_star: tuple[float, float] | None

    def csv(self, sweep: str) -> str:
        def pair(p):
            return f"{_fmt(p[0])},{_fmt(p[1])}" if p is not None else ","
        return ",".join([
            sweep, _fmt(self.sweep_value), self.mechanism, str(self.runs),
            pair(self.total_utility), pair(self.participation), pair(self.total_payment),
            pair(self.quality_error), str(self.quality_error_runs), pair(self.final_e_star),
        ])


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.6f}"


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    return statistics.fmean(values), statistics.pstdev(values)


def quality_error_report(winner_efforts: dict, users_by_id: dict, noise_scale: float) -> float | None:
    """Mean measurement error over winners; None when there are no winners.

    Each user's error draw comes from its own noise stream, so the same user
    draws the same standard normal under every mechanism.
    """
    if not winner_efforts:
        return None
    errs = [measurement_error(e, noise_scale, make_rng(users_by_id[u].noise_seed))
            for u, e in winner_efforts.items()]
    return statistics.fmean(errs)


@dataclass
class InstanceResult:
    records: list[RunRecord]
    stages: list[tuple] = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)


def reverse_auction_efforts(population, effort_maps: Sequence[dict],
                            participant_sets: Sequence[Iterable]) -> tuple[dict, set]:
    """Each user's highest effort elicited by any of the contests."""
    best: dict = {}
    who: set = set()
    for efforts, parts in zip(effort_maps, participant_sets):
        for u in parts:
            who.add(u)
            best[u] = max(best.get(u, 0.0), efforts[u])
    return best, who


def run_instance(scenario: Scenario, params: MechanismParams, budget: float, seed: int,
                 mechanisms: Sequence[str] = ALL_MECHANISMS, sweep_value: float = 0.0,
                 replication: int = 0) -> InstanceResult:
    """Run the selected mechanisms on one scenario (identical arrival stream)."""
    users = scenario.users
    grid = scenario.grid
    by_id = {u.id: u for u in users}
    noise = scenario.config.noise_scale
    outcomes: dict = {}
    contests = []
    bbs_needed = BBS in mechanisms or RA_FULL in mechanisms or RA_IC in mechanisms
    if bbs_needed:
        cfg = params.mechanism_config(scenario.config, budget, seed)
        outcomes[BBS] = run_bbs(users, cfg, grid, scenario.profile)
        contests.append(outcomes[BBS])
    if users and (WTA in mechanisms or RA_FULL in mechanisms or RA_IC in mechanisms):
        outcomes[WTA] = winner_take_all(users, grid, budget, c=scenario.config.c,
                                        profile_fn=scenario.profile,
                                        v_bar_mode=params.v_bar_mode)
        contests.append(outcomes[WTA])
    if len(users) >= 2 and (MW in mechanisms or RA_FULL in mechanisms or RA_IC in mechanisms):
        outcomes[MW] = multiple_winners(users, grid, budget, params.multiple_winners_L,
                                        c=scenario.config.c, profile_fn=scenario.profile,
                                        v_bar_mode=params.v_bar_mode)
        contests.append(outcomes[MW])
    if RA_FULL in mechanisms or RA_IC in mechanisms:
        efforts, who = reverse_auction_efforts(
            users, [o.efforts for o in contests], [o.participants for o in contests])
        subs = submissions_from(users, efforts, grid, scenario.profile, participants=who)
        if RA_FULL in mechanisms:
            outcomes[RA_FULL] = offline_reverse_auction(subs, grid, budget, FULL_KNOWLEDGE)
        if RA_IC in mechanisms:
            outcomes[RA_IC] = offline_reverse_auction(subs, grid, budget, INCENTIVE_COMPATIBLE,
                                                      parse_policy(params.prize_policy))
    records = []
    for name in mechanisms:
        out = outcomes.get(name)
        if out is None:
            records.append(RunRecord(sweep_value, replication, name, 0, 0, 0.0, None, None))
            continue
        winners = {u: out.efforts[u] for u in out.winners}
        if name == BBS:
            e_star = out.final_threshold.effort_threshold if out.final_threshold else None
        else:
            e_star = getattr(out, "e_star", None)
        records.append(RunRecord(
            sweep_value, replication, name, int(out.total_utility), len(out.participants),
            float(out.total_payment), quality_error_report(winners, by_id, noise), e_star))
    stages = []
    if BBS in outcomes:
        for s in outcomes[BBS].stages:
            stages.append((sweep_value, replication, s.stage, s.t, s.e_star, s.m_star,
                           s.sample_size, int(s.kept_previous)))
    return InstanceResult(records, stages, outcomes)


def _task(args) -> InstanceResult:
    config, sweep_idx, value, rep = args
    scen_cfg, budget = config.point(value)
    scenario = build_scenario(scen_cfg, child_seed(config.seed, sweep_idx, rep, 0))
    result = run_instance(scenario, config.mechanism, budget,
                          child_seed(config.seed, sweep_idx, rep, 1),
                          config.mechanisms, value, rep)
    result.outcomes = {}  # keep results light across processes
    return result


def aggregate(records: Sequence[RunRecord], sweep_values: Sequence[float],
              mechanisms: Sequence[str]) -> list[MetricRow]:
    rows = []
    for value in sweep_values:
        for mech in mechanisms:
            rs = [r for r in records if r.sweep_value == value and r.mechanism == mech]
            if not rs:
                continue
            q = [r.quality_error for r in rs if r.quality_error is not None]
            e = [r.final_e_star for r in rs if r.final_e_star is not None]
            rows.append(MetricRow(
                value, mech, len(rs),
                _mean_std([r.total_utility for r in rs]),
                _mean_std([r.participation for r in rs]),
                _mean_std([r.total_payment for r in rs]),
                _mean_std(q) if q else None, len(q),
                _mean_std(e) if e else None,
            ))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[MetricRow]
    records: list[RunRecord]
    stages: list[tuple]

    def metrics_csv(self) -> str:
        sweep = self.config.sweep
        return METRIC_HEADER + "\n" + "".join(r.csv(sweep) + "\n" for r in self.rows)

    def runs_csv(self) -> str:
        sweep = self.config.sweep
        return RUN_HEADER + "\n" + "".join(r.csv(sweep) + "\n" for r in self.records)

    def trace_csv(self) -> str:
        return trace_csv(self.stages)


def trace_csv(stages: Sequence[tuple]) -> str:
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    for value, rep, stage, t, e, m, size, kept in stages:
        buf.write(f"{_fmt(value)},{rep},{stage},{t},{_fmt(e)},{_fmt(m)},{size},{kept}\n")
    return buf.getvalue()


def ensure_writable(out_dir) -> Path:
    """Create ``out_dir`` and prove it is writable; raises OSError otherwise."""
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write-probe"
    probe.write_text("")
    probe.unlink()
    return path


def manifest(config: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "config": config.to_dict(),
        "master_seed": config.seed,
        "rng": ALGORITHM,
        "child_seed_key": "(sweep_index, replication, stream) with stream 0=scenario, 1=mechanism",
        "versions": {
            "bbs_sense": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "kernel_backend": kernels.BACKEND,
    }


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Every sweep value x replication; results reduced in (sweep, replication) order."""
    out_dir = ensure_writable(config.out) if write else None
    tasks = [(config, k, v, rep) for k, v in enumerate(config.sweep_values)
             for rep in range(config.replications)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    records = [r for res in results for r in res.records]
    stages = [s for res in results for s in res.stages]
    result = ExperimentResult(config, aggregate(records, config.sweep_values, config.mechanisms),
                              records, stages)
    if write:
        (out_dir / "metrics.csv").write_text(result.metrics_csv())
        (out_dir / "runs.csv").write_text(result.runs_csv())
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest(config, "sweep"), indent=1, sort_keys=True) + "\n")
    return result


def threshold_trace(config: ExperimentConfig, write: bool = True) -> list[list[float]]:
    """Per-run e* series of the online mechanism at the first sweep value."""
    cfg = replace(config, mechanisms=(BBS,))
    value = cfg.sweep_values[0]
    out_dir = ensure_writable(cfg.out) if write else None
    series, stages = [], []
    for rep in range(cfg.replications):
        res = _task((cfg, 0, value, rep))
        stages.extend(res.stages)
        series.append([s[4] for s in res.stages])
    if write:
        (out_dir / "trace.csv").write_text(trace_csv(stages))
        buf = ["replication,stages,last_stage_change"]
        for rep, s in enumerate(series):
            buf.append(f"{rep},{len(s)},{_fmt(last_stage_change(s))}")
        (out_dir / "stabilization.csv").write_text("\n".join(buf) + "\n")
    return series
