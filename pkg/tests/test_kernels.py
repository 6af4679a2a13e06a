import numpy as np
import pytest
from hypothesis import given, strategies as st

from bbs_sense import _kernels_py, kernels
from bbs_sense.coverage import build_manhattan_grid

from conftest import BACKENDS

words = st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=6)


def _arr(xs):
    return np.array(xs, dtype=np.uint64)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@given(words)
def test_popcount_matches_bin(xs):
    want = sum(bin(x).count("1") for x in xs)
    for b in BACKENDS:
        assert b.values[0].popcount(_arr(xs)) == want


@given(st.data())
def test_andnot_and_batch(data):
    k = data.draw(st.integers(1, 5))
    a = _arr(data.draw(st.lists(st.integers(0, 2**64 - 1), min_size=k, max_size=k)))
    c = _arr(data.draw(st.lists(st.integers(0, 2**64 - 1), min_size=k, max_size=k)))
    want = sum(bin(int(x) & ~int(y) & (2**64 - 1)).count("1") for x, y in zip(a, c))
    mat = np.ascontiguousarray(np.stack([a, c, a]))
    for b in BACKENDS:
        mod = b.values[0]
        assert mod.popcount_andnot(a, c) == want
        got = mod.batch_popcount_andnot(mat, c)
        assert list(got) == [want, 0, want]


def test_or_inplace(kern):
    cov = _arr([1, 0])
    kern.or_inplace(cov, _arr([2, 8]))
    assert list(cov) == [3, 8]


@pytest.mark.parametrize("seed", range(5))
def test_road_walk_backends_agree(seed):
    grid = build_manhattan_grid(3, 3, 60, 40, 1.0)
    rng = np.random.default_rng(seed)
    ties = rng.random(301)
    start = int(rng.integers(grid.m))
    paths = [b.values[0].road_walk(grid.neighbors, start, 300, ties) for b in BACKENDS]
    for p in paths[1:]:
        assert np.array_equal(p, paths[0])


def test_road_walk_moves_along_edges(kern):
    grid = build_manhattan_grid(2, 2, 20, 20, 1.0)
    ties = np.linspace(0, 0.99, 81)
    path = kern.road_walk(grid.neighbors, 0, 80, ties)
    assert len(path) == 81
    for a, b in zip(path, path[1:]):
        assert b in grid.neighbors[a]


def test_road_walk_prefix(kern):
    grid = build_manhattan_grid(3, 3, 30, 30, 1.0)
    ties = np.random.default_rng(1).random(101)
    long = kern.road_walk(grid.neighbors, 5, 100, ties)
    short = kern.road_walk(grid.neighbors, 5, 40, ties[:41])
    assert np.array_equal(long[:41], short)


def test_isolated_point_stays(kern):
    grid = build_manhattan_grid(1, 0, 1, 0, 1.0)
    path = kern.road_walk(grid.neighbors, 0, 5, np.zeros(6))
    assert list(path) == [0]
