"""Effort threshold from a sample: prize structure plus proportional-share greedy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .bidding import PrizeStructure
from .coverage import AoiGrid, CoverageState, SensingProfile, n_words
from .errors import DuplicateMemberError, InvalidConfigError


@dataclass(frozen=True)
class EqualSplit:
    L: int

    def prizes(self, budget: float) -> tuple[float, ...]:
        return (budget / self.L,) * self.L


@dataclass(frozen=True)
class Geometric:
    ratio: float
    L: int

    def prizes(self, budget: float) -> tuple[float, ...]:
        weights = [self.ratio ** k for k in range(self.L)]
        top = budget / sum(weights)
        return tuple(top * w for w in weights)


@dataclass(frozen=True)
class GridSearch:
    """Try equal splits with L = 1..L_max and keep the one admitting most utility."""

    L_max: int = 10


PrizePolicy = Union[EqualSplit, Geometric, GridSearch]


def parse_policy(text: str) -> PrizePolicy:
    """``equal_split:3``, ``geometric:0.5:3`` or ``grid_search[:10]``."""
    name, *args = text.strip().split(":")
    try:
        if name == "equal_split":
            return EqualSplit(int(args[0]))
        if name == "geometric":
            return Geometric(float(args[0]), int(args[1]))
        if name == "grid_search":
            return GridSearch(int(args[0])) if args else GridSearch()
    except (IndexError, ValueError) as exc:
        raise InvalidConfigError(f"bad prize policy {text!r}") from exc
    raise InvalidConfigError(f"unknown prize policy {text!r}")


class SamplePool:
    """Sampled users with their submitted profiles and efforts."""

    def __init__(self, grid: AoiGrid, entries=()):
        self.grid = grid
        self.entries: list[tuple[object, SensingProfile, float]] = []
        self._ids: set = set()
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        for user, profile, effort in entries:
            self.add(user, profile, effort)

    def add(self, user, profile: SensingProfile, effort: float) -> None:
        if user in self._ids:
            raise DuplicateMemberError(f"user {user!r} already sampled")
        profile.validate(self.grid)
        self._ids.add(user)
        self.entries.append((user, profile, float(effort)))
        self._rows.append(profile.bits(self.grid.m))
        self._matrix = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def users(self) -> list:
        return [e[0] for e in self.entries]

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self._rows:
                self._matrix = np.ascontiguousarray(np.stack(self._rows))
            else:
                self._matrix = np.zeros((0, n_words(self.grid.m)), dtype=np.uint64)
        return self._matrix


@dataclass(frozen=True)
class ThresholdState:
    effort_threshold: float
    minimal_prize: float


@dataclass(frozen=True)
class Pick:
    user: object
    step: int
    marginal: int
    prize: float
    ratio: float


@dataclass
class ThresholdResult:
    state: ThresholdState | None
    prizes: PrizeStructure
    winners: tuple = ()
    utility: int = 0
    admissions: list[tuple[Pick, float]] = field(default_factory=list)

    @property
    def keep_previous(self) -> bool:
        return self.state is None

    def trace_row(self, stage: int) -> str:
        if self.state is None:
            return f"{stage},,,,{self.utility}"
        winners = ";".join(str(u) for u in self.winners)
        return (f"{stage},{self.state.effort_threshold:.9g},"
                f"{self.state.minimal_prize:.9g},{winners},{self.utility}")


def proportional_share_sorted(pool: SamplePool, prizes) -> list[Pick]:
    """Lazy greedy order by current marginal utility over the step's prize.

    At step k every remaining candidate is divided by the same prize M_k, so
    the pick is the largest residual marginal; ties go to the smaller id.
    """
    prizes = tuple(prizes.prizes if isinstance(prizes, PrizeStructure) else prizes)
    if not prizes:
        raise InvalidConfigError("need at least one prize")
    users = pool.users
    mat = pool.matrix()
    state = CoverageState(pool.grid)
    alive = np.ones(len(users), dtype=bool)
    order: list[Pick] = []
    for k, prize in enumerate(prizes[: len(users)], start=1):
        gains = state.gains(mat)
        gains = np.where(alive, gains, -1)
        best = gains.max()
        tied = np.flatnonzero(gains == best)
        j = min(tied, key=lambda t: users[t]) if len(tied) > 1 else int(tied[0])
        g = int(gains[j])
        order.append(Pick(users[j], k, g, prize, g / prize))
        alive[j] = False
        state.add(mat[j])
    return order


def _admit(pool: SamplePool, ps: PrizeStructure, budget: float):
    admitted: list[tuple[Pick, float]] = []
    total = 0
    for pick in proportional_share_sorted(pool, ps):
        joined = total + pick.marginal
        if joined == 0:
            break
        bound = pick.marginal * budget / joined
        if not pick.prize <= bound:
            break
        admitted.append((pick, bound))
        total = joined
    return admitted, total


def optimal_prize_structure(pool: SamplePool, budget: float,
                            policy: PrizePolicy) -> PrizeStructure:
    if budget <= 0:
        raise InvalidConfigError("budget must be positive")
    if len(pool) == 0:
        return PrizeStructure((budget,), budget)
    if isinstance(policy, GridSearch):
        best_ps, best_score = None, -1
        for L in range(1, policy.L_max + 1):
            ps = PrizeStructure(EqualSplit(L).prizes(budget), budget)
            _, score = _admit(pool, ps, budget)
            if score > best_score:
                best_ps, best_score = ps, score
        return best_ps
    return PrizeStructure(policy.prizes(budget), budget)


def get_effort_threshold(pool: SamplePool, budget: float,
                         policy: PrizePolicy | None = None,
                         prizes: PrizeStructure | None = None) -> ThresholdResult:
    """Proportional-share threshold ``e* = B'/U(J)`` and minimal prize ``M_L``.

    ``prizes`` bypasses the policy. An empty or zero-coverage sample yields a
    result with ``state=None``: the caller keeps its previous threshold.
    """
    if budget <= 0:
        raise InvalidConfigError("budget must be positive")
    if prizes is None:
        prizes = optimal_prize_structure(pool, budget, policy or GridSearch())
    admitted, total = _admit(pool, prizes, budget)
    winners = tuple(p.user for p, _ in admitted)
    if total == 0:
        return ThresholdResult(None, prizes, winners, 0, admitted)
    state = ThresholdState(budget / total, prizes.minimal_prize)
    return ThresholdResult(state, prizes, winners, total, admitted)
