# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: bitmap coverage counts and the road walk."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int32_t, int64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def popcount(const uint64_t[::1] bits):
    cdef Py_ssize_t k
    cdef long long total = 0
    with nogil:
        for k in range(bits.shape[0]):
            total += __builtin_popcountll(bits[k])
    return total


def popcount_andnot(const uint64_t[::1] profile, const uint64_t[::1] covered):
    cdef Py_ssize_t k
    cdef long long total = 0
    with nogil:
        for k in range(profile.shape[0]):
            total += __builtin_popcountll(profile[k] & ~covered[k])
    return total


def batch_popcount_andnot(const uint64_t[:, ::1] profiles, const uint64_t[::1] covered):
    cdef Py_ssize_t r, k
    cdef Py_ssize_t n = profiles.shape[0]
    cdef Py_ssize_t w = profiles.shape[1]
    out = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] res = out
    cdef long long total
    with nogil:
        for r in range(n):
            total = 0
            for k in range(w):
                total += __builtin_popcountll(profiles[r, k] & ~covered[k])
            res[r] = total
    return out


def or_inplace(uint64_t[::1] covered, const uint64_t[::1] profile):
    cdef Py_ssize_t k
    with nogil:
        for k in range(covered.shape[0]):
            covered[k] |= profile[k]


def road_walk(const int32_t[:, ::1] neighbors, Py_ssize_t start, Py_ssize_t steps,
              const double[::1] ties):
    """Walk ``steps`` edges from ``start``; see ``_kernels_py.road_walk``."""
    cdef Py_ssize_t m = neighbors.shape[0]
    cdef Py_ssize_t s, d, k, nxt, best_d, n_opts, n_tied
    cdef int64_t best_visit, v
    cdef int heading = -1, rev
    cdef int opts[4]
    cdef int tied[4]
    last = np.full(m, -1, dtype=np.int64)
    cdef int64_t[::1] last_visit = last
    path = np.empty(steps + 1, dtype=np.int64)
    cdef int64_t[::1] p = path
    cdef Py_ssize_t cur = start

    last_visit[cur] = 0
    p[0] = cur
    n_opts = 0
    for d in range(4):
        if neighbors[cur, d] >= 0:
            opts[n_opts] = d
            n_opts += 1
    if n_opts == 0:
        return path[:1]
    heading = opts[<Py_ssize_t>(ties[0] * n_opts) if ties[0] < 1.0 else n_opts - 1]

    for s in range(1, steps + 1):
        n_opts = 0
        for d in range(4):
            if neighbors[cur, d] >= 0:
                opts[n_opts] = d
                n_opts += 1
        rev = (heading + 2) % 4
        if n_opts <= 2:
            if neighbors[cur, heading] >= 0:
                best_d = heading
            else:
                best_d = opts[0]
                for k in range(n_opts):
                    if opts[k] != rev:
                        best_d = opts[k]
                        break
                else:
                    best_d = rev
        else:
            best_visit = 0x7FFFFFFFFFFFFFFF
            n_tied = 0
            for k in range(n_opts):
                d = opts[k]
                if d == rev:
                    continue
                v = last_visit[neighbors[cur, d]]
                if v < best_visit:
                    best_visit = v
                    tied[0] = d
                    n_tied = 1
                elif v == best_visit:
                    tied[n_tied] = d
                    n_tied += 1
            k = <Py_ssize_t>(ties[s] * n_tied)
            if k >= n_tied:
                k = n_tied - 1
            best_d = tied[k]
        nxt = neighbors[cur, best_d]
        heading = best_d
        cur = nxt
        last_visit[cur] = s
        p[s] = cur
    return path
