"""Synthetic crowd-sensing world: road grid, users, arrivals, submissions."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kernels
from .bidding import AbilityDistribution
from .coverage import AoiGrid, SensingProfile, build_manhattan_grid
from .errors import InvalidConfigError
from .rng import make_rng


@dataclass(frozen=True)
class ScenarioConfig:
    avenues: int = 3
    streets: int = 3
    avenue_len_m: float = 1135.0
    street_len_m: float = 319.0
    spacing_m: float = 1.0
    n_users: int | None = 200
    c: float = 0.5
    arrival_rate: float = 2.0
    horizon: int = 256
    heterogeneous_range: bool = True
    range_min: float = 3.0
    range_max: float = 10.0
    default_range: float = 7.0
    walk_scale: float = 100.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise InvalidConfigError("c must lie in (0, 1)")
        if self.arrival_rate <= 0:
            raise InvalidConfigError("arrival rate must be positive")
        if self.horizon < 0:
            raise InvalidConfigError("horizon must be non-negative")
        if self.n_users is not None and self.n_users < 1:
            raise InvalidConfigError("n_users must be at least 1")
        if not 0 < self.range_min <= self.range_max:
            raise InvalidConfigError("need 0 < range_min <= range_max")
        if self.walk_scale < 0 or self.noise_scale <= 0:
            raise InvalidConfigError("walk_scale >= 0 and noise_scale > 0 required")

    @property
    def expected_bidders(self) -> int:
        """Bidder count assumed in the bid formula: expected arrivals."""
        expected = max(1, round(self.arrival_rate * self.horizon))
        return min(expected, self.n_users) if self.n_users else expected

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ArrivalProcess:
    rate: float
    horizon: int

    def __post_init__(self):
        if self.rate <= 0:
            raise InvalidConfigError("arrival rate must be positive")


@dataclass(frozen=True)
class User:
    id: int
    ability: float
    sensing_range: float
    location: int
    arrival_time: int
    walk_seed: int
    noise_seed: int


@dataclass
class Scenario:
    config: ScenarioConfig
    seed: int
    grid: AoiGrid
    users: list[User]
    _profiles: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def arrival_times(self) -> list[int]:
        return [u.arrival_time for u in self.users]

    def profile(self, user: User, effort: float) -> SensingProfile:
        """Cached ``realize_profile`` with the user's own walk stream."""
        key = (user.id, float(effort))
        prof = self._profiles.get(key)
        if prof is None:
            prof = realize_profile(user, effort, self.grid,
                                   walk_scale=self.config.walk_scale)
            self._profiles[key] = prof
        return prof

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": asdict(self.config),
            "users": [asdict(u) for u in self.users],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        cfg = ScenarioConfig.from_dict(data["config"])
        grid = grid_for(cfg)
        users = [User(**u) for u in data["users"]]
        return cls(cfg, int(data["seed"]), grid, users)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


_GRID_CACHE: dict[tuple, AoiGrid] = {}


def grid_for(cfg: ScenarioConfig) -> AoiGrid:
    key = (cfg.avenues, cfg.streets, cfg.avenue_len_m, cfg.street_len_m, cfg.spacing_m)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        grid = build_manhattan_grid(*key)
        _GRID_CACHE[key] = grid
    return grid


def abilities_from_uniform(u, c: float):
    """Inverse-CDF transform of uniforms on (0, 1] to abilities."""
    return AbilityDistribution(c).inverse(u)


def sample_abilities(n: int, c: float, rng) -> np.ndarray:
    rng = make_rng(rng)
    u = 1.0 - rng.random(n)  # (0, 1]
    return abilities_from_uniform(u, c)


def generate_arrivals(proc: ArrivalProcess, rng) -> np.ndarray:
    """Integer arrival steps in 1..T of a rate-``proc.rate`` Poisson process.

    Continuous arrival time ``s`` in [0, T) lands in step ``floor(s) + 1``.
    """
    rng = make_rng(rng)
    if proc.horizon <= 0:
        return np.zeros(0, dtype=np.int64)
    chunk = max(16, int(proc.rate * proc.horizon * 1.2) + 16)
    times: list[np.ndarray] = []
    last = 0.0
    while True:
        gaps = rng.exponential(1.0 / proc.rate, size=chunk)
        t = last + np.cumsum(gaps)
        times.append(t[t < proc.horizon])
        if t[-1] >= proc.horizon:
            break
        last = t[-1]
    cont = np.concatenate(times)
    return np.floor(cont).astype(np.int64) + 1


def sensing_range_for(theta, cfg: ScenarioConfig):
    if not cfg.heterogeneous_range:
        return np.full_like(np.asarray(theta, dtype=float), cfg.default_range)
    return cfg.range_min + np.asarray(theta) * (cfg.range_max - cfg.range_min)


def build_scenario(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Users in arrival order; at most ``n_users`` of the Poisson arrivals."""
    rng = make_rng(seed)
    grid = grid_for(cfg)
    times = generate_arrivals(ArrivalProcess(cfg.arrival_rate, cfg.horizon), rng)
    if cfg.n_users is not None:
        times = times[: cfg.n_users]
    n = len(times)
    theta = sample_abilities(n, cfg.c, rng)
    ranges = sensing_range_for(theta, cfg)
    locs = rng.integers(0, grid.m, size=n)
    seeds = rng.integers(0, 2**63 - 1, size=(n, 2), dtype=np.int64)
    users = [
        User(k, float(theta[k]), float(ranges[k]), int(locs[k]), int(times[k]),
             int(seeds[k, 0]), int(seeds[k, 1]))
        for k in range(n)
    ]
    return Scenario(cfg, int(seed), grid, users)


def realize_profile(user: User, effort: float, grid: AoiGrid, rng=None,
                    walk_scale: float = 100.0) -> SensingProfile:
    """Points within the user's sensing range of a road walk of ``walk_scale * effort`` m.

    The walk draws its turn decisions from ``rng`` (default: the user's own
    walk stream), one uniform per step, so more effort extends the same walk.
    """
    if effort < 0:
        raise InvalidConfigError("effort must be non-negative")
    rng = make_rng(user.walk_seed if rng is None else rng)
    length = walk_scale * effort
    steps = int(math.floor(length / grid.spacing + 1e-9)) if math.isfinite(length) else 0
    ties = rng.random(steps + 1)
    path = kernels.road_walk(grid.neighbors, int(user.location), steps, ties)
    visited = np.unique(path)
    hits = grid.kdtree.query_ball_point(grid.coords[visited], user.sensing_range + 1e-9,
                                        return_sorted=False)
    if len(visited) == 1:
        return SensingProfile(hits[0])
    return SensingProfile(np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])).tolist())


def measurement_error(effort: float, noise_scale: float, rng) -> float:
    """Absolute deviation from ground truth, normal with std ``noise_scale / (1 + effort)``."""
    if noise_scale <= 0:
        raise InvalidConfigError("noise scale must be positive")
    rng = make_rng(rng)
    return abs(float(rng.normal(0.0, noise_scale / (1.0 + effort))))
