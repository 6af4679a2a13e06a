"""Online multi-stage mechanism: threshold-gated payments with budget doubling
and a secretary branch."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .bidding import BidHistory, PrizeStructure, best_response_log_bid, value_of_winning
from .coverage import AoiGrid, CoverageState, SensingProfile
from .errors import InvalidConfigError, RejectedArrivalError
from .rng import child, make_rng
from .threshold import (GridSearch, PrizePolicy, SamplePool, ThresholdState,
                        get_effort_threshold)

THRESHOLD = "threshold"
SECRETARY = "secretary"

EVENT_HEADER = "t,event_kind,user,branch,effort,marginal_utility,payment,budget_remaining"
STAGE_HEADER = "stage,e_star,m_star,winners,utility"


@dataclass(frozen=True)
class MechanismConfig:
    total_budget: float
    horizon: int
    initial_effort: float = 0.1
    initial_min_prize: float = 0.1
    threshold_branch_probability: float = 1.0 / 3.0
    routing_mode: str = "per_user"
    prize_policy: PrizePolicy = GridSearch()
    seed: int = 0
    c: float = 0.5
    v_bar_mode: str = "fixed_point"
    secretary_sample: str = "one_over_e"
    secretary_fraction: float = 1.0 / math.e
    expected_bidders: int | None = None

    def __post_init__(self):
        if self.total_budget <= 0:
            raise InvalidConfigError("total budget must be positive")
        if self.horizon < 1:
            raise InvalidConfigError("horizon must be at least 1")
        if not 0 < self.threshold_branch_probability <= 1:
            raise InvalidConfigError("threshold branch probability must lie in (0, 1]")
        if self.routing_mode not in ("per_user", "per_run"):
            raise InvalidConfigError(f"unknown routing mode {self.routing_mode!r}")
        if self.secretary_sample not in ("one_over_e", "first_stage"):
            raise InvalidConfigError(f"unknown secretary sample {self.secretary_sample!r}")
        if self.v_bar_mode not in ("fixed", "fixed_point"):
            raise InvalidConfigError(f"unknown v_bar mode {self.v_bar_mode!r}")
        if self.initial_effort <= 0 or self.initial_min_prize <= 0:
            raise InvalidConfigError("initial threshold and prize must be positive")


@dataclass
class StageState:
    stage_budget: float
    stage_end: float
    quantile: int
    spent: float
    threshold: ThresholdState
    sample: SamplePool
    prizes: PrizeStructure


@dataclass(frozen=True)
class Event:
    t: int
    kind: str
    user: object
    branch: str
    effort: float
    marginal_utility: int
    payment: float
    budget_remaining: float
    stage_budget: float = 0.0

    def csv(self) -> str:
        return (f"{self.t},{self.kind},{self.user},{self.branch},{self.effort:.9g},"
                f"{self.marginal_utility},{self.payment:.9g},{self.budget_remaining:.9g}")


@dataclass(frozen=True)
class StageRecord:
    stage: int
    t: int
    e_star: float
    m_star: float
    winners: tuple
    utility: int
    kept_previous: bool
    threshold_budget: float
    sample_size: int

    def csv(self) -> str:
        winners = ";".join(str(u) for u in self.winners)
        return f"{self.stage},{self.e_star:.9g},{self.m_star:.9g},{winners},{self.utility}"


@dataclass(frozen=True)
class SecretaryRecord:
    user: object
    payment: float
    time: int
    value: int


@dataclass
class MechanismOutcome:
    budget: float
    payments: dict = field(default_factory=dict)
    efforts: dict = field(default_factory=dict)
    winners: list = field(default_factory=list)
    participants: list = field(default_factory=list)
    sample: list = field(default_factory=list)
    total_utility: int = 0
    stages: list[StageRecord] = field(default_factory=list)
    secretary: SecretaryRecord | None = None
    events: list[Event] = field(default_factory=list)
    final_threshold: ThresholdState | None = None

    @property
    def total_payment(self) -> float:
        return sum(self.payments.values())

    def events_csv(self) -> str:
        buf = io.StringIO()
        buf.write(EVENT_HEADER + "\n")
        for ev in self.events:
            buf.write(ev.csv() + "\n")
        return buf.getvalue()

    def stages_csv(self) -> str:
        return STAGE_HEADER + "\n" + "".join(s.csv() + "\n" for s in self.stages)


def initial_stage(config: MechanismConfig, grid: AoiGrid) -> StageState:
    """Stage 0: T' = T / 2^k and B' = B / 2^k with k = floor(log2 T)."""
    k = int(math.floor(math.log2(config.horizon)))
    budget = config.total_budget / 2 ** k
    return StageState(
        stage_budget=budget,
        stage_end=config.horizon / 2 ** k,
        quantile=0,
        spent=0.0,
        threshold=ThresholdState(config.initial_effort, config.initial_min_prize),
        sample=SamplePool(grid),
        prizes=PrizeStructure((budget,), budget),
    )


def route_arrival(user, config: MechanismConfig, rng, run_branch: str | None = None) -> str:
    """Pick the branch for one arrival.

    ``per_user`` flips a fresh coin per arrival; ``per_run`` reuses
    ``run_branch`` (drawn once by the caller with this same function).
    """
    if config.routing_mode == "per_run" and run_branch is not None:
        return run_branch
    p = config.threshold_branch_probability
    if p >= 1.0:
        return THRESHOLD
    return THRESHOLD if rng.random() < p else SECRETARY


class DynkinSelector:
    """Classical stopping rule: skip ``sample_size`` values, then take the first
    value above the best skipped one."""

    def __init__(self, sample_size: int):
        self.sample_size = max(0, int(sample_size))
        self.seen = 0
        self.best = -math.inf
        self.selected = None

    def observe(self, user, value) -> bool:
        if self.selected is not None:
            return False
        self.seen += 1
        if self.seen <= self.sample_size:
            self.best = max(self.best, value)
            return False
        if value > self.best:
            self.selected = user
            return True
        return False


def secretary_branch(stream: Iterable[tuple[object, float]], budget: float,
                     sample_size: int) -> tuple[object, float] | None:
    """Offline run of the stopping rule over ``(user, value)`` pairs."""
    sel = DynkinSelector(sample_size)
    for user, value in stream:
        if sel.observe(user, value):
            return user, budget
    return None


def stage_boundary(state: StageState, config: MechanismConfig) -> tuple[StageState, StageRecord]:
    """Recompute the threshold for the next stage and double B', T'."""
    next_budget = min(2.0 * state.stage_budget, config.total_budget)
    result = get_effort_threshold(state.sample, next_budget, config.prize_policy)
    threshold, prizes = state.threshold, state.prizes
    if not result.keep_previous:
        threshold, prizes = result.state, result.prizes
    record = StageRecord(
        stage=state.quantile,
        t=int(math.floor(state.stage_end)),
        e_star=threshold.effort_threshold,
        m_star=threshold.minimal_prize,
        winners=result.winners,
        utility=result.utility,
        kept_previous=result.keep_previous,
        threshold_budget=next_budget,
        sample_size=len(state.sample),
    )
    new = replace(state, stage_budget=next_budget, stage_end=2.0 * state.stage_end,
                  quantile=state.quantile + 1, threshold=threshold, prizes=prizes)
    return new, record


def _secretary_sample_size(config: MechanismConfig, n_expected: int, run_branch) -> int:
    if config.routing_mode == "per_run":
        routed = n_expected if run_branch == SECRETARY else 0
    else:
        routed = (1.0 - config.threshold_branch_probability) * n_expected
    return int(math.floor(config.secretary_fraction * routed))


def run_bbs(arrivals: Sequence, config: MechanismConfig, grid: AoiGrid,
            profile_fn: Callable[[object, float], SensingProfile] | None = None,
            ) -> MechanismOutcome:
    """Process ``arrivals`` (users with ``id``, ``ability``, ``arrival_time``) online.

    ``profile_fn(user, effort)`` turns a bid into a submission; by default the
    road-walk realization of :mod:`bbs_sense.scenario`.
    """
    if profile_fn is None:
        from .scenario import realize_profile

        def profile_fn(user, effort):
            return realize_profile(user, effort, grid)

    times = [u.arrival_time for u in arrivals]
    for u in arrivals:
        if u.arrival_time > config.horizon or u.arrival_time < 1:
            raise RejectedArrivalError(
                f"user {u.id} arrives at {u.arrival_time}, outside 1..{config.horizon}")
    if any(a > b for a, b in zip(times, times[1:])):
        raise InvalidConfigError("arrivals must be sorted by arrival time")

    rng = make_rng(child(config.seed, 0))
    n = config.expected_bidders or max(1, len(arrivals))
    B = config.total_budget
    run_branch = route_arrival(None, replace(config, routing_mode="per_user"), rng) \
        if config.routing_mode == "per_run" else None

    state = initial_stage(config, grid)
    first_stage_end = int(math.floor(state.stage_end))
    out = MechanismOutcome(budget=B)
    history = BidHistory(n)
    sample_cov = CoverageState(grid)
    all_cov = CoverageState(grid)
    dynkin = DynkinSelector(_secretary_sample_size(config, n, run_branch))
    first_stage_best = -math.inf
    spent = 0.0

    pos = 0
    for t in range(1, config.horizon + 1):
        while pos < len(arrivals) and arrivals[pos].arrival_time == t:
            user = arrivals[pos]
            pos += 1
            branch = route_arrival(user, config, rng, run_branch)
            i = min(pos, n)
            ps = state.prizes
            log_v = value_of_winning(n, i, config.c, ps, user.ability,
                                     mode=config.v_bar_mode).log_value
            log_e = best_response_log_bid(n, i, config.c, log_v, user.ability,
                                          history.lth_log_effort(ps.L))
            effort = math.exp(log_e)
            history.add(user.id, effort, log_e)
            out.efforts[user.id] = effort
            profile = profile_fn(user, effort)
            bits = profile.bits(grid.m)
            marginal = sample_cov.gain(bits)
            if log_e > -math.inf:
                out.participants.append(user.id)
                all_cov.add(bits)

            payment = 0.0
            if branch == THRESHOLD:
                offer = state.threshold.effort_threshold * marginal
                if state.threshold.minimal_prize <= offer <= state.stage_budget - spent:
                    payment = offer
                    kind = "paid"
                else:
                    kind = "unpaid"
                state.sample.add(user.id, profile, effort)
                sample_cov.add(bits)
                out.sample.append(user.id)
            else:
                if config.secretary_sample == "first_stage":
                    if t <= first_stage_end:
                        first_stage_best = max(first_stage_best, marginal)
                        kind = "secretary_sample"
                    elif out.secretary is None and marginal > first_stage_best:
                        kind = "secretary_select"
                    else:
                        kind = "secretary_reject"
                else:
                    before = dynkin.seen
                    chosen = dynkin.observe(user.id, marginal)
                    if chosen:
                        kind = "secretary_select"
                    elif before < dynkin.sample_size:
                        kind = "secretary_sample"
                    else:
                        kind = "secretary_reject"
                if kind == "secretary_select":
                    payment = min(B, B - spent)
                    out.secretary = SecretaryRecord(user.id, payment, t, marginal)

            if payment > 0:
                spent += payment
                out.payments[user.id] = payment
                out.winners.append(user.id)
            out.events.append(Event(t, kind, user.id, branch, effort, marginal,
                                    payment, B - spent, state.stage_budget))
        if t == int(math.floor(state.stage_end)):
            state, record = stage_boundary(state, config)
            out.stages.append(record)
            out.events.append(Event(t, "stage", "", "", 0.0, record.utility, 0.0,
                                    B - spent, state.stage_budget))
    out.total_utility = all_cov.value
    out.final_threshold = state.threshold
    return out


def threshold_series(outcome: MechanismOutcome) -> list[float]:
    return [s.e_star for s in outcome.stages]


def last_stage_change(series: Sequence[float]) -> float:
    """Relative change of e* between the final two stages (nan with < 2)."""
    if len(series) < 2:
        return math.nan
    prev, last = series[-2], series[-1]
    return abs(last - prev) / abs(prev) if prev else math.inf
