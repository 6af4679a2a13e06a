"""Comparison mechanisms: fixed prize contests and offline reverse auctions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .bidding import BidHistory, PrizeStructure, best_response_log_bid, value_of_winning
from .coverage import AoiGrid, CoverageState, SensingProfile
from .errors import DomainError, InvalidConfigError
from .threshold import GridSearch, PrizePolicy, SamplePool, get_effort_threshold

FULL_KNOWLEDGE = "full_knowledge"
INCENTIVE_COMPATIBLE = "incentive_compatible"


@dataclass
class BaselineOutcome:
    mechanism: str
    budget: float
    payments: dict = field(default_factory=dict)
    efforts: dict = field(default_factory=dict)
    winners: list = field(default_factory=list)
    participants: list = field(default_factory=list)
    total_utility: int = 0
    e_star: float | None = None

    @property
    def total_payment(self) -> float:
        return sum(self.payments.values())


@dataclass(frozen=True)
class Submission:
    """A user's sensing data offered at a private cost."""

    user: object
    effort: float
    cost: float
    profile: SensingProfile


def _default_profile_fn(grid):
    from .scenario import realize_profile

    return lambda user, effort: realize_profile(user, effort, grid)


def contest_bids(population: Sequence, ps: PrizeStructure, c: float,
                 v_bar_mode: str = "fixed_point") -> dict:
    """Sequential best-response log-bids of ``population`` (arrival order)."""
    n = len(population)
    history = BidHistory(n)
    log_bids = {}
    for i, user in enumerate(population, start=1):
        log_v = value_of_winning(n, i, c, ps, user.ability, mode=v_bar_mode).log_value
        log_e = best_response_log_bid(n, i, c, log_v, user.ability,
                                      history.lth_log_effort(ps.L))
        history.add(user.id, math.exp(log_e), log_e)
        log_bids[user.id] = log_e
    return log_bids


def _run_contest(name: str, population, grid: AoiGrid, ps: PrizeStructure, c: float,
                 profile_fn, v_bar_mode: str) -> BaselineOutcome:
    if not population:
        raise DomainError("contest needs at least one user")
    profile_fn = profile_fn or _default_profile_fn(grid)
    log_bids = contest_bids(population, ps, c, v_bar_mode)
    out = BaselineOutcome(name, ps.budget)
    cov = CoverageState(grid)
    for user in population:
        log_e = log_bids[user.id]
        out.efforts[user.id] = math.exp(log_e)
        if log_e > -math.inf:
            out.participants.append(user.id)
            cov.add(profile_fn(user, out.efforts[user.id]).bits(grid.m))
    ranked = sorted(population, key=lambda u: (-log_bids[u.id], u.id))
    for prize, user in zip(ps.prizes, ranked):
        out.payments[user.id] = prize
        out.winners.append(user.id)
    out.total_utility = cov.value
    return out


def winner_take_all(population: Sequence, grid: AoiGrid, B: float, *, c: float = 0.5,
                    profile_fn: Callable | None = None,
                    v_bar_mode: str = "fixed_point") -> BaselineOutcome:
    """Single prize B to the highest effort (ties to the smaller id)."""
    return _run_contest("winner_take_all", population, grid, PrizeStructure((B,), B),
                        c, profile_fn, v_bar_mode)


def multiple_winners(population: Sequence, grid: AoiGrid, B: float, L: int, *,
                     c: float = 0.5, profile_fn: Callable | None = None,
                     v_bar_mode: str = "fixed_point") -> BaselineOutcome:
    """L equal prizes of B/L to the top-L efforts; L is capped at the population size."""
    if L < 2:
        raise DomainError("multiple winners needs L >= 2")
    L = min(L, len(population))
    ps = PrizeStructure((B / L,) * L, B)
    return _run_contest("multiple_winners", population, grid, ps, c, profile_fn, v_bar_mode)


def submissions_from(population: Sequence, efforts: dict, grid: AoiGrid,
                     profile_fn: Callable | None = None,
                     participants=None) -> list[Submission]:
    """Reverse-auction offers from observed efforts; cost is effort / ability.

    Only ``participants`` (default: users with positive effort) make an offer.
    A bid too small to represent as a float is offered at cost 0.
    """
    profile_fn = profile_fn or _default_profile_fn(grid)
    keep = set(participants) if participants is not None else \
        {u for u, e in efforts.items() if e > 0}
    subs = []
    for user in population:
        if user.id not in keep:
            continue
        e = efforts[user.id]
        subs.append(Submission(user.id, e, e / user.ability, profile_fn(user, e)))
    return subs


def offline_reverse_auction(submissions: Sequence[Submission], grid: AoiGrid, B: float,
                            variant: str = FULL_KNOWLEDGE,
                            policy: PrizePolicy | None = None) -> BaselineOutcome:
    """Offline benchmarks over a fixed set of priced submissions.

    ``full_knowledge`` buys greedily by marginal utility per unit cost and pays
    each seller its cost until nothing affordable adds coverage.
    ``incentive_compatible`` runs the proportional-share threshold once on the
    whole pool with budget B and pays ``e* * U_i`` to its winners.
    """
    if B <= 0:
        raise InvalidConfigError("budget must be positive")
    if any(s.cost < 0 for s in submissions):
        raise DomainError("costs must be non-negative")
    if variant == FULL_KNOWLEDGE:
        return _full_knowledge(submissions, grid, B)
    if variant == INCENTIVE_COMPATIBLE:
        return _incentive_compatible(submissions, grid, B, policy or GridSearch())
    raise InvalidConfigError(f"unknown reverse auction variant {variant!r}")


def _full_knowledge(submissions, grid, B) -> BaselineOutcome:
    out = BaselineOutcome("reverse_full_knowledge", B)
    cov = CoverageState(grid)
    bits = [s.profile.bits(grid.m) for s in submissions]
    remaining = B
    # candidates in id order, so strict comparison leaves ties with the smaller id
    left = sorted(range(len(submissions)), key=lambda k: submissions[k].user)
    while left:
        best, best_key = None, None
        for k in left:
            s = submissions[k]
            if s.cost > remaining:
                continue
            g = cov.gain(bits[k])
            if g == 0:
                continue
            ratio = math.inf if s.cost == 0 else g / s.cost
            key = (ratio, g)
            if best_key is None or key > best_key:
                best, best_key = k, key
        if best is None:
            break
        s = submissions[best]
        left.remove(best)
        cov.add(bits[best])
        remaining -= s.cost
        out.payments[s.user] = s.cost
        out.efforts[s.user] = s.effort
        out.winners.append(s.user)
        out.participants.append(s.user)
    out.total_utility = cov.value
    return out


def _incentive_compatible(submissions, grid, B, policy) -> BaselineOutcome:
    out = BaselineOutcome("reverse_incentive_compatible", B)
    pool = SamplePool(grid, [(s.user, s.profile, s.effort) for s in submissions])
    result = get_effort_threshold(pool, B, policy)
    if result.keep_previous:
        return out
    e_star = result.state.effort_threshold
    out.e_star = e_star
    by_user = {s.user: s for s in submissions}
    cov = CoverageState(grid)
    spent = 0.0
    for pick, _bound in result.admissions:
        s = by_user[pick.user]
        pay = min(e_star * pick.marginal, B - spent)
        spent += pay
        cov.add(s.profile.bits(grid.m))
        out.payments[s.user] = pay
        out.efforts[s.user] = s.effort
        out.winners.append(s.user)
        out.participants.append(s.user)
    out.total_utility = cov.value
    return out
