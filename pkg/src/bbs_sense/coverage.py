"""Point-coverage utility over sensing profiles and the road-grid AoI.

Profiles are held as Python sets for the public API and as packed ``uint64``
bitmaps for the greedy loops; the bitmap path is what the mechanism uses,
the set path is kept as a reference implementation.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .errors import DuplicateMemberError, InvalidConfigError, InvalidProfileError

# neighbour slots in AoiGrid.neighbors
EAST, NORTH, WEST, SOUTH = range(4)


def n_words(m: int) -> int:
    return (m + 63) // 64


def to_bits(points: Iterable[int], m: int) -> np.ndarray:
    """Pack point ids into a bitmap of ``n_words(m)`` words."""
    idx = np.fromiter(points, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        bad = int(idx.max() if idx.max() >= m else idx.min())
        raise InvalidProfileError(f"point {bad} outside grid of {m} points")
    flat = np.zeros(n_words(m) * 64, dtype=bool)
    flat[idx] = True
    return np.packbits(flat, bitorder="little").view(np.uint64).copy()


def from_bits(bits: np.ndarray) -> frozenset[int]:
    flat = np.unpackbits(bits.view(np.uint8), bitorder="little")
    return frozenset(np.flatnonzero(flat).tolist())


@dataclass(frozen=True, eq=False)
class AoiGrid:
    coords: np.ndarray
    neighbors: np.ndarray
    avenues: int
    streets: int
    avenue_length_points: int
    street_length_points: int
    intersection_count: int
    spacing: float = 1.0

    @property
    def m(self) -> int:
        return int(self.coords.shape[0])

    @property
    def points(self) -> range:
        return range(self.m)

    @cached_property
    def kdtree(self):
        from scipy.spatial import cKDTree

        return cKDTree(self.coords)

    @cached_property
    def full_bits(self) -> np.ndarray:
        return to_bits(range(self.m), self.m)

    def to_text(self) -> str:
        """Serialize as ``id,x,y`` rows preceded by ``# key=value`` metadata."""
        buf = io.StringIO()
        for key in ("avenues", "streets", "avenue_length_points",
                    "street_length_points", "intersection_count", "spacing"):
            buf.write(f"# {key}={getattr(self, key)}\n")
        buf.write("id,x,y\n")
        for pid, (x, y) in enumerate(self.coords):
            buf.write(f"{pid},{x:.6f},{y:.6f}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "AoiGrid":
        meta: dict[str, str] = {}
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if line.startswith("id,"):
                continue
            pid, x, y = line.split(",")
            rows.append((int(pid), float(x), float(y)))
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise InvalidConfigError("grid point ids must be dense in [0, m)")
        coords = np.array([(r[1], r[2]) for r in rows], dtype=float).reshape(-1, 2)
        spacing = float(meta.get("spacing", 1.0))
        return cls(
            coords=coords,
            neighbors=_lattice_neighbors(coords, spacing),
            avenues=int(meta.get("avenues", 0)),
            streets=int(meta.get("streets", 0)),
            avenue_length_points=int(meta.get("avenue_length_points", 0)),
            street_length_points=int(meta.get("street_length_points", 0)),
            intersection_count=int(meta.get("intersection_count", 0)),
            spacing=spacing,
        )


def _lattice_neighbors(coords: np.ndarray, spacing: float) -> np.ndarray:
    """Road adjacency: points one spacing apart along an axis are neighbours."""
    keys = np.rint(coords / spacing).astype(np.int64)
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(keys)}
    nb = np.full((len(keys), 4), -1, dtype=np.int32)
    steps = ((1, 0), (0, 1), (-1, 0), (0, -1))
    for i, (a, b) in enumerate(keys):
        for d, (dx, dy) in enumerate(steps):
            j = index.get((int(a) + dx, int(b) + dy))
            if j is not None:
                nb[i, d] = j
    return nb


def _evenly_spaced(count: int, length: int) -> list[int]:
    # interior positions, e.g. 3 roads across 4 blocks sit at the quarter marks
    return [round((k + 1) * (length - 1) / (count + 1)) for k in range(count)]


def build_manhattan_grid(avenues: int, streets: int, avenue_len_m: float,
                         street_len_m: float, spacing_m: float = 1.0) -> AoiGrid:
    """Discretize a mesh of east-west avenues and north-south streets.

    Each avenue holds ``avenue_len_m / spacing_m`` points and each street
    ``street_len_m / spacing_m``; streets are spaced evenly along the avenues
    and vice versa, so every avenue crosses every street exactly once and the
    crossing point is shared.
    """
    if spacing_m <= 0:
        raise InvalidConfigError("spacing must be positive")
    if avenues < 0 or streets < 0 or avenue_len_m < 0 or street_len_m < 0:
        raise InvalidConfigError("grid dimensions must be non-negative")
    if avenues and avenue_len_m <= 0 or streets and street_len_m <= 0:
        raise InvalidConfigError("a road needs a positive length")
    if avenues + streets == 0:
        raise InvalidConfigError("grid needs at least one road")
    a_pts = int(round(avenue_len_m / spacing_m)) if avenues else 0
    s_pts = int(round(street_len_m / spacing_m)) if streets else 0

    street_x = _evenly_spaced(streets, a_pts) if avenues else list(range(streets))
    avenue_y = _evenly_spaced(avenues, s_pts) if streets else list(range(avenues))
    if len(set(street_x)) != streets or len(set(avenue_y)) != avenues:
        raise InvalidConfigError("roads too short to hold distinct crossings")

    index: dict[tuple[int, int], int] = {}
    coords: list[tuple[int, int]] = []

    def add(x: int, y: int) -> None:
        if (x, y) not in index:
            index[(x, y)] = len(coords)
            coords.append((x, y))

    for y in avenue_y:
        for x in range(a_pts):
            add(x, y)
    for x in street_x:
        for y in range(s_pts):
            add(x, y)

    arr = np.array(coords, dtype=float).reshape(-1, 2) * spacing_m
    shared = avenues * a_pts + streets * s_pts - len(coords)
    return AoiGrid(
        coords=arr,
        neighbors=_lattice_neighbors(arr, spacing_m),
        avenues=avenues,
        streets=streets,
        avenue_length_points=a_pts,
        street_length_points=s_pts,
        intersection_count=shared,
        spacing=float(spacing_m),
    )


class SensingProfile:
    """Set of grid points covered by one submission."""

    __slots__ = ("covered", "_bits")

    def __init__(self, covered: Iterable[int] = ()):
        self.covered = frozenset(int(p) for p in covered)
        self._bits: dict[int, np.ndarray] = {}

    def __eq__(self, other) -> bool:
        return isinstance(other, SensingProfile) and self.covered == other.covered

    def __hash__(self) -> int:
        return hash(self.covered)

    def __repr__(self) -> str:
        return f"SensingProfile({sorted(self.covered)!r})"

    def __len__(self) -> int:
        return len(self.covered)

    def bits(self, m: int) -> np.ndarray:
        cached = self._bits.get(m)
        if cached is None:
            cached = to_bits(self.covered, m)
            self._bits[m] = cached
        return cached

    def validate(self, grid: AoiGrid) -> None:
        if self.covered and (max(self.covered) >= grid.m or min(self.covered) < 0):
            raise InvalidProfileError(
                f"profile references a point outside [0, {grid.m})")


class Selection:
    """Ordered set of users together with their sensing profiles."""

    def __init__(self, members: Iterable = (), profiles: Mapping | None = None):
        self.members: list = []
        self.profiles: dict = {}
        profiles = profiles or {}
        for u in members:
            self.add(u, profiles[u])

    def __contains__(self, user) -> bool:
        return user in self.profiles

    def __len__(self) -> int:
        return len(self.members)

    def add(self, user, profile: SensingProfile) -> None:
        if user in self.profiles:
            raise DuplicateMemberError(f"user {user!r} already selected")
        self.members.append(user)
        self.profiles[user] = profile

    def copy(self) -> "Selection":
        return Selection(self.members, self.profiles)

    @classmethod
    def from_dict(cls, profiles: Mapping) -> "Selection":
        return cls(list(profiles), profiles)


def covered_bits(sel: Selection, grid: AoiGrid) -> np.ndarray:
    acc = np.zeros(n_words(grid.m), dtype=np.uint64)
    for u in sel.members:
        prof = sel.profiles[u]
        prof.validate(grid)
        kernels.or_inplace(acc, prof.bits(grid.m))
    return acc


def utility(sel: Selection, grid: AoiGrid) -> int:
    """Number of grid points sensed by at least one selected user."""
    return kernels.popcount(covered_bits(sel, grid))


def marginal_utility(user, profile: SensingProfile, sel: Selection, grid: AoiGrid) -> int:
    """Points ``user`` would add to the coverage of ``sel``."""
    if user in sel:
        raise DuplicateMemberError(f"user {user!r} already selected")
    profile.validate(grid)
    return kernels.popcount_andnot(profile.bits(grid.m), covered_bits(sel, grid))


def utility_naive(sel: Selection, grid: AoiGrid) -> int:
    """Literal sum over points of min(1, #covering users); reference only."""
    total = 0
    for j in range(grid.m):
        hits = sum(1 for u in sel.members if j in sel.profiles[u].covered)
        total += min(1, hits)
    return total


def marginal_utility_naive(user, profile: SensingProfile, sel: Selection, grid: AoiGrid) -> int:
    if user in sel:
        raise DuplicateMemberError(f"user {user!r} already selected")
    union: set[int] = set()
    for u in sel.members:
        union |= sel.profiles[u].covered
    return len(profile.covered - union)


class CoverageState:
    """Running union of selected profiles, for incremental marginal gains."""

    def __init__(self, grid: AoiGrid):
        self.m = grid.m
        self.bits = np.zeros(n_words(grid.m), dtype=np.uint64)
        self.value = 0

    def gain(self, profile_bits: np.ndarray) -> int:
        return kernels.popcount_andnot(profile_bits, self.bits)

    def gains(self, profile_matrix: np.ndarray) -> np.ndarray:
        return kernels.batch_popcount_andnot(profile_matrix, self.bits)

    def add(self, profile_bits: np.ndarray) -> int:
        g = self.gain(profile_bits)
        kernels.or_inplace(self.bits, profile_bits)
        self.value += g
        return g

    def copy(self) -> "CoverageState":
        other = CoverageState.__new__(CoverageState)
        other.m = self.m
        other.bits = self.bits.copy()
        other.value = self.value
        return other
