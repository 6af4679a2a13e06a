"""Equilibrium effort bids in the sequential all-pay contest.

Abilities follow F(x) = x**c on (0, 1]. Bidder ``i`` of ``n`` arrives after
observing bids 1..i-1; exerting effort ``e`` costs ``e / theta``. With
``d_i = (1 - c)**(n - i)`` the probability that no later bidder outbids ``e``
is ``(e / V)**(1 - d_i)`` and the payoff to maximize is::

    V * (e / V)**(1 - d_i) - e / theta      subject to e >= e_Lth

where ``e_Lth`` is the L-th largest bid seen so far.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateLastBidderError, DomainError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AbilityDistribution:
    c: float
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise DomainError(f"ability exponent must lie in (0, 1), got {self.c}")

    def cdf(self, x: float) -> float:
        return ability_cdf(self, x)

    def inverse(self, u):
        """Inverse CDF, ``u**(1/c)``; vectorized."""
        return np.power(u, 1.0 / self.c)


def ability_cdf(dist: AbilityDistribution, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"ability {x} outside [0, 1]")
    return float(x) ** dist.c


def order_stat_cdf(j: int, n_opponents: int, p: float) -> float:
    """P(a bid beats all but at most j-1 of ``n_opponents`` i.i.d. rivals).

    ``p`` is the chance one rival lands at or below the bid, so this is the
    binomial upper tail P(Bin(n_opponents, p) >= n_opponents - j + 1).
    """
    if not 1 <= j <= n_opponents:
        raise DomainError(f"rank {j} outside 1..{n_opponents}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0, 1]")
    if j == 1:
        return p ** n_opponents
    q = 1.0 - p
    lo = n_opponents - j + 1
    total = 0.0
    for k in range(lo, n_opponents + 1):
        total += math.comb(n_opponents, k) * p ** k * q ** (n_opponents - k)
    return min(1.0, total)


def log_order_stat_cdf(j: int, n_opponents: int, log_p: float) -> float:
    """``log(order_stat_cdf(j, n_opponents, exp(log_p)))`` without underflow."""
    if not 1 <= j <= n_opponents:
        raise DomainError(f"rank {j} outside 1..{n_opponents}")
    if log_p > 0:
        raise DomainError("log probability must be <= 0")
    if log_p == -math.inf:
        return -math.inf
    if log_p == 0.0:
        return 0.0
    log_q = math.log1p(-math.exp(log_p)) if log_p < -1e-300 else -math.inf
    lo = n_opponents - j + 1
    terms = []
    for k in range(lo, n_opponents + 1):
        if n_opponents - k > 0 and log_q == -math.inf:
            continue
        rest = (n_opponents - k) * log_q if n_opponents > k else 0.0
        terms.append(_log_comb(n_opponents, k) + k * log_p + rest)
    return min(0.0, _logsumexp(terms))


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _logsumexp(terms) -> float:
    terms = [t for t in terms if t != -math.inf]
    if not terms:
        return -math.inf
    top = max(terms)
    return top + math.log(sum(math.exp(t - top) for t in terms))


@dataclass(frozen=True)
class PrizeStructure:
    prizes: tuple[float, ...]
    budget: float

    def __post_init__(self):
        prizes = tuple(float(m) for m in self.prizes)
        object.__setattr__(self, "prizes", prizes)
        if not prizes:
            raise DomainError("prize structure needs at least one prize")
        if any(a < b for a, b in zip(prizes, prizes[1:])):
            raise DomainError("prizes must be non-increasing")
        if prizes[-1] <= 0:
            raise DomainError("prizes must be positive")
        if sum(prizes) > self.budget * (1 + 1e-12):
            raise DomainError(f"prizes sum to {sum(prizes)} > budget {self.budget}")

    @property
    def L(self) -> int:
        return len(self.prizes)

    @property
    def minimal_prize(self) -> float:
        return self.prizes[-1]

    def spreads(self) -> list[float]:
        """``M_l - M_{l+1}`` with ``M_{L+1} = 0``."""
        nxt = self.prizes[1:] + (0.0,)
        return [a - b for a, b in zip(self.prizes, nxt)]


def expected_prize_value(ps: PrizeStructure, win_probs: Sequence[float]) -> float:
    if len(win_probs) != ps.L:
        raise DomainError(f"need {ps.L} rank probabilities, got {len(win_probs)}")
    total = 0.0
    for prob, spread in zip(win_probs, ps.spreads()):
        if not 0.0 <= prob <= 1.0:
            raise DomainError(f"rank probability {prob} outside [0, 1]")
        total += prob * spread
    return total


def discount(n: int, i: int, c: float) -> float:
    """``d_i = (1 - c)**(n - i)``."""
    if not 1 <= i <= n:
        raise DomainError(f"bidder index {i} outside 1..{n}")
    return (1.0 - c) ** (n - i)


def zero_bid_mass_product(n: int, i: int, c: float, e_over_v: float) -> float:
    """Probability that bidders i+1..n all drop out against ``e``."""
    if not 0.0 <= e_over_v <= 1.0:
        raise DomainError(f"bid/value ratio {e_over_v} outside [0, 1]")
    return e_over_v ** (1.0 - discount(n, i, c))


def interior_log_ratio(n: int, i: int, c: float, theta: float) -> float:
    """``log(e / V)`` of the interior solution; -inf at theta = 0."""
    if i == n:
        raise DegenerateLastBidderError("interior bid undefined for the last bidder")
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"ability {theta} outside [0, 1]")
    d = discount(n, i, c)
    if theta == 0.0:
        return -math.inf
    return math.log(theta * (1.0 - d)) / d


def interior_bid(n: int, i: int, c: float, v_bar: float, theta: float) -> float:
    """Unconstrained best response ``V * (theta * (1 - d_i))**(1 / d_i)``."""
    if v_bar <= 0:
        raise DomainError("value of winning must be positive")
    return v_bar * math.exp(interior_log_ratio(n, i, c, theta))


def foc_residual(n: int, i: int, c: float, theta: float, log_ratio: float) -> float:
    """First-order condition ``(1-d)(e/V)**(-d) - 1/theta`` at ``log(e/V)``."""
    d = discount(n, i, c)
    return (1.0 - d) * math.exp(-d * log_ratio) - 1.0 / theta


def payoff(n: int, i: int, c: float, v_bar: float, theta: float, e: float) -> float:
    """Expected net payoff of bid ``e`` when no constraint binds."""
    if e <= 0:
        return 0.0
    d = discount(n, i, c)
    win = min(1.0, e / v_bar) ** (1.0 - d)
    cost = math.inf if theta <= 0 else e / theta
    return v_bar * win - cost


@dataclass
class BidHistory:
    """Bids observed so far, in arrival order."""

    n: int
    bids: list[tuple[object, float, int]] = field(default_factory=list)
    _sorted: list[float] = field(default_factory=list, repr=False)
    _sorted_log: list[float] = field(default_factory=list, repr=False)

    def add(self, user, effort: float, log_effort: float | None = None) -> None:
        """Record a bid; ``log_effort`` keeps bids that underflow as floats."""
        if effort < 0:
            raise DomainError("effort must be non-negative")
        if log_effort is None:
            log_effort = math.log(effort) if effort > 0 else -math.inf
        self.bids.append((user, float(effort), len(self.bids) + 1))
        bisect.insort(self._sorted, float(effort))
        bisect.insort(self._sorted_log, float(log_effort))

    def lth_log_effort(self, L: int) -> float:
        if L < 1:
            raise DomainError("L must be at least 1")
        if len(self._sorted_log) < L:
            return -math.inf
        return self._sorted_log[-L]

    def lth_effort(self, L: int) -> float:
        """L-th largest observed effort, 0 with fewer than L bids."""
        if L < 1:
            raise DomainError("L must be at least 1")
        if len(self._sorted) < L:
            return 0.0
        return self._sorted[-L]

    def __len__(self) -> int:
        return len(self.bids)


def participation_thresholds(n: int, i: int, c: float, v_bar: float,
                             floor: float) -> tuple[float, float]:
    """Ability cut-offs (low, high) of the three-branch best response.

    Below ``low`` matching ``floor`` loses money, so the bid is 0. Between the
    two the best bid is exactly ``floor``. From ``high`` up the interior bid
    clears ``floor`` on its own.
    """
    if floor <= 0:
        return 0.0, 0.0
    d = discount(n, i, c)
    low = (floor / v_bar) ** d
    high = math.inf if d >= 1.0 else low / (1.0 - d)
    return low, high


def best_response_bid(n: int, i: int, c: float, v_bar: float, theta: float,
                      history: BidHistory, L: int) -> float:
    """Piecewise best response of bidder ``i`` given the observed bids."""
    if theta <= 0 or v_bar <= 0:
        return 0.0
    floor = history.lth_effort(L)
    low, high = participation_thresholds(n, i, c, v_bar, floor)
    if theta < low:
        return 0.0
    if i == n:
        # last bidder: ties go to the late entrant, so matching suffices
        return floor
    if theta >= high:
        return interior_bid(n, i, c, v_bar, theta)
    return floor


def best_response_log_bid(n: int, i: int, c: float, log_v: float, theta: float,
                          log_floor: float) -> float:
    """``best_response_bid`` in log space: returns ``log e`` (-inf for no bid).

    Same branch logic; used by the simulations because early bidders in long
    contests bid amounts far below the float range.
    """
    if theta <= 0 or log_v == -math.inf:
        return -math.inf
    d = discount(n, i, c)
    if log_floor > -math.inf:
        log_low = d * (log_floor - log_v)
        if math.log(theta) < log_low:
            return -math.inf
        if i == n:
            return log_floor
        log_high = log_low - math.log(1.0 - d)
        if math.log(theta) < log_high:
            return log_floor
    elif i == n:
        return -math.inf
    return log_v + interior_log_ratio(n, i, c, theta)


def _golden_max(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def numeric_best_response_oracle(n: int, i: int, c: float, v_bar: float, theta: float,
                                 history: BidHistory, L: int,
                                 grid_points: int = 2001,
                                 log_span: float = 60.0) -> float:
    """Brute-force maximizer of the constrained payoff; a test oracle.

    Scans ``log e`` on a dense grid over ``[max(e_Lth, V e**-log_span), V]``,
    polishes the best cell by golden-section search and returns 0 when the
    best attainable payoff is negative.
    """
    if theta <= 0 or v_bar <= 0:
        return 0.0
    floor = history.lth_effort(L)
    if floor > v_bar:
        return 0.0

    def obj(u: float) -> float:
        return payoff(n, i, c, v_bar, theta, math.exp(u))

    lo = math.log(max(floor, v_bar * math.exp(-log_span)))
    hi = math.log(v_bar)
    if hi - lo < 1e-15:
        best_u, best_val = hi, obj(hi)
    else:
        us = np.linspace(lo, hi, grid_points)
        vals = np.array([obj(u) for u in us])
        k = int(np.argmax(vals))
        a, b = us[max(k - 1, 0)], us[min(k + 1, grid_points - 1)]
        best_u, best_val = _golden_max(obj, a, b)
        if vals[k] > best_val:
            best_u, best_val = us[k], vals[k]
        if floor > 0 and obj(lo) >= best_val:
            best_u, best_val = lo, obj(lo)
    if best_val < 0:
        return 0.0
    return floor if best_u == lo and floor > 0 else math.exp(best_u)


@dataclass(frozen=True)
class VBarResult:
    value: float
    iterations: int
    converged: bool
    log_value: float = math.nan


def value_of_winning(n: int, i: int, c: float, ps: PrizeStructure, theta: float,
                     mode: str = "fixed_point", tol: float = 1e-9,
                     max_iter: int = 100) -> VBarResult:
    """Expected prize value ``V = sum_l Phi_l (M_l - M_{l+1})`` for bidder ``i``.

    ``fixed`` returns the top prize. ``fixed_point`` starts from the top prize,
    bids the interior solution, maps that bid back to an ability through the
    interior bid map, reads off the rank probabilities and repeats until V
    settles. Works in log space; ``value`` may underflow where ``log_value``
    does not.
    """
    top = ps.prizes[0]
    if mode == "fixed":
        return VBarResult(top, 0, True, math.log(top))
    if mode != "fixed_point":
        raise DomainError(f"unknown value mode {mode!r}")
    opponents = n - 1
    if opponents == 0:
        return VBarResult(top, 0, True, math.log(top))
    log_spreads = [math.log(sp) if sp > 0 else -math.inf for sp in ps.spreads()]
    log_v = math.log(top)
    for it in range(1, max_iter + 1):
        if theta <= 0:
            log_theta_hat = -math.inf
        elif i < n:
            d = discount(n, i, c)
            log_ratio = interior_log_ratio(n, i, c, theta)
            # ability whose interior bid equals ours
            log_theta_hat = min(0.0, d * log_ratio - math.log(1.0 - d))
        else:
            log_theta_hat = min(0.0, math.log(theta))
        log_p = c * log_theta_hat
        terms = []
        for l, ls in enumerate(log_spreads, start=1):
            if ls == -math.inf:
                continue
            lphi = log_order_stat_cdf(l, opponents, log_p) if l <= opponents else 0.0
            terms.append(lphi + ls)
        log_new = _logsumexp(terms)
        if log_new == -math.inf:
            return VBarResult(0.0, it, True, -math.inf)
        if abs(math.expm1(log_new - log_v)) <= tol:
            return VBarResult(math.exp(log_new), it, True, log_new)
        log_v = log_new
    warnings.warn("value-of-winning iteration did not converge", RuntimeWarning)
    return VBarResult(math.exp(log_v), max_iter, False, log_v)
