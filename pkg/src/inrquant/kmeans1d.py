"""Globally optimal 1D k-means.

Optimal clusters of sorted scalars are contiguous, so the problem is a
dynamic program over split points.  The within-cluster cost satisfies the
quadrangle inequality, which makes the optimal split monotone in the right
end point; each DP row is then filled with divide and conquer in
O(n log n), for O(m n log n + n log n) overall.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _cost(s, ss, i, j):
    # SSE of sorted[i..j] inclusive
    n = j - i + 1
    t = s[j + 1] - s[i]
    c = ss[j + 1] - ss[i] - t * t / n
    return c if c > 0.0 else 0.0


@numba.njit(cache=True)
def _fill_row(prev, cur, arg, row, s, ss, n):
    # iterative divide and conquer over j in [row, n-1]
    stack = np.empty((64 + 2 * n, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = row
    stack[0, 1] = n - 1
    stack[0, 2] = row
    stack[0, 3] = n - 1
    top = 1
    while top > 0:
        top -= 1
        jlo = stack[top, 0]
        jhi = stack[top, 1]
        olo = stack[top, 2]
        ohi = stack[top, 3]
        if jlo > jhi:
            continue
        mid = (jlo + jhi) // 2
        best = np.inf
        besti = olo
        hi = ohi if ohi < mid else mid
        for i in range(olo, hi + 1):
            c = prev[i - 1] + _cost(s, ss, i, mid)
            if c < best:
                best = c
                besti = i
        cur[mid] = best
        arg[mid] = besti
        stack[top, 0] = jlo
        stack[top, 1] = mid - 1
        stack[top, 2] = olo
        stack[top, 3] = besti
        top += 1
        stack[top, 0] = mid + 1
        stack[top, 1] = jhi
        stack[top, 2] = besti
        stack[top, 3] = ohi
        top += 1


@numba.njit(cache=True)
def _solve(x, m):
    n = x.shape[0]
    s = np.zeros(n + 1)
    ss = np.zeros(n + 1)
    for i in range(n):
        s[i + 1] = s[i] + x[i]
        ss[i + 1] = ss[i] + x[i] * x[i]
    args = np.zeros((m, n), dtype=np.int32)
    prev = np.empty(n)
    for j in range(n):
        prev[j] = _cost(s, ss, 0, j)
    cur = np.empty(n)
    arg = np.zeros(n, dtype=np.int64)
    for row in range(1, m):
        cur[:] = np.inf
        _fill_row(prev, cur, arg, row, s, ss, n)
        for j in range(row, n):
            args[row, j] = arg[j]
        prev, cur = cur, prev
    # backtrack cluster start indices
    starts = np.zeros(m, dtype=np.int64)
    j = n - 1
    for row in range(m - 1, 0, -1):
        starts[row] = args[row, j]
        j = starts[row] - 1
    return starts, prev[n - 1]


def kmeans_1d(values, m: int) -> tuple[np.ndarray, float]:
    """Optimal ``m``-cluster partition of scalar data.

    Returns ``(centroids, sse)`` with centroids sorted ascending.  When the
    data has at most ``m`` distinct values the centroids are exactly those
    values and the error is 0.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("kmeans_1d needs at least one value")
    if m < 1:
        raise ValueError("m must be >= 1")
    distinct = np.unique(x)
    if distinct.size <= m:
        return distinct, 0.0
    # centring keeps the prefix-sum cost numerically stable
    shift = x.mean()
    starts, _ = _solve(x - shift, m)
    counts = np.diff(np.append(starts, x.size))
    centroids = np.add.reduceat(x, starts) / counts
    resid = x - np.repeat(centroids, counts)
    return centroids, float(resid @ resid)
