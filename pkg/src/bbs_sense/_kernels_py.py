"""Pure-Python/numpy versions of the compiled kernels.

Semantics match ``_kernels.pyx`` exactly; the test suite runs both.
"""
import numpy as np


def popcount(bits):
    return int(np.bitwise_count(bits).sum())


def popcount_andnot(profile, covered):
    return int(np.bitwise_count(profile & ~covered).sum())


def batch_popcount_andnot(profiles, covered):
    return np.bitwise_count(profiles & ~covered).sum(axis=1, dtype=np.int64)


def or_inplace(covered, profile):
    np.bitwise_or(covered, profile, out=covered)


def road_walk(neighbors, start, steps, ties):
    """Walk ``steps`` edges along the road graph from ``start``.

    ``neighbors[p]`` lists the east, north, west and south neighbour of point
    ``p`` (``-1`` when absent). On a plain road segment the walker keeps its
    heading and turns around at dead ends. At an intersection it avoids going
    back the way it came and heads for the neighbour visited least recently,
    breaking ties with ``ties[s]`` (uniform on [0, 1)). ``ties[0]`` picks the
    initial heading. Because step ``s`` only reads ``ties[s]``, a longer walk
    always extends a shorter one.
    """
    m = neighbors.shape[0]
    last_visit = np.full(m, -1, dtype=np.int64)
    path = np.empty(steps + 1, dtype=np.int64)
    cur = int(start)
    last_visit[cur] = 0
    path[0] = cur
    row = neighbors[cur]
    opts = [d for d in range(4) if row[d] >= 0]
    if not opts:
        return path[:1]
    heading = opts[min(int(ties[0] * len(opts)), len(opts) - 1)]

    for s in range(1, steps + 1):
        row = neighbors[cur]
        opts = [d for d in range(4) if row[d] >= 0]
        rev = (heading + 2) % 4
        if len(opts) <= 2:
            if row[heading] >= 0:
                best = heading
            else:
                others = [d for d in opts if d != rev]
                best = others[0] if others else rev
        else:
            cands = [d for d in opts if d != rev]
            visits = [last_visit[row[d]] for d in cands]
            low = min(visits)
            tied = [d for d, v in zip(cands, visits) if v == low]
            best = tied[min(int(ties[s] * len(tied)), len(tied) - 1)]
        heading = best
        cur = int(row[best])
        last_visit[cur] = s
        path[s] = cur
    return path
